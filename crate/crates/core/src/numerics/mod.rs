//! Matrix types, the differentiation tape, and the optimizer.

pub mod adam;
pub mod dense;
pub mod params;
pub mod sparse;
pub mod tape;

pub use adam::AdamState;
pub use dense::{gemm, DenseMatrix, Trans};
pub use params::{ParamEntry, ParamId, ParamStore};
pub use sparse::{Duplicates, SparseMatrix};
pub use tape::{aggregate_relations, row_softmax, Tape, Var};
