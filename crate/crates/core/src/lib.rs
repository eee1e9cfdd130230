//! Message passing on topological domains.
//!
//! The crate covers hypergraphs, simplicial complexes, cellular complexes and
//! combinatorial complexes: building and validating them ([`complex`]),
//! the neighborhood matrices derived from their incidences
//! ([`neighborhoods`]), lifting graphs into richer domains ([`lifting`]), a
//! small reverse-mode differentiation kernel ([`tensor`]), a declarative
//! four-step message-passing engine ([`engine`]) with a catalog of reference
//! layers ([`layers`]), and the JSON/text file formats ([`io`]).

pub mod complex;
pub mod engine;
pub mod error;
pub mod features;
pub mod homology;
pub mod io;
pub mod layers;
pub mod lifting;
pub mod model;
pub mod neighborhoods;
pub mod sparse;
pub mod symmetry;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use complex::{build_complex, close_downward, Cell, CellId, CellSpec, Complex, DomainKind};
pub use error::{Error, Result};
pub use features::FeatureStore;
pub use tensor::DenseMatrix;
