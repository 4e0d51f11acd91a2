//! Discrete Cartan calculus on box grids, elliptic solvers, and the
//! ε-rescaled reduced RT iteration that lifts a rough affine connection to
//! optimal regularity.

pub mod calculus;
pub mod corpus;
pub mod elliptic;
pub mod error;
pub mod forms;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod multi;
pub mod norms;
pub mod rng;
pub mod rt;
pub mod verify;

pub use error::{Error, Result};
pub use forms::{Connection, Form, Kind, Matrix, MatrixForm, Vector, VectorForm};
pub use grid::Grid;
