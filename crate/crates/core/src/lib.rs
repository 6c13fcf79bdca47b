//! Open dynamical systems on interconnection networks.
//!
//! The crate models open (control) systems on trivial product submersions,
//! wires them together along interconnection maps, and checks maps between
//! networks by testing relatedness of the composed vector fields. Graph
//! fibrations of coupled-cell style networks produce such maps, and the
//! linear-relation module checks the underlying relation calculus in finite
//! dimension.
//!
//! Module map:
//!
//! - [`exprlang`]: expressions, parsing, evaluation, symbolic derivatives
//! - [`graph`]: directed multigraphs and graph fibrations
//! - [`spaces`]: coordinate spaces, submersions and their maps
//! - [`opensys`]: open systems, pullback, products, relatedness checks
//! - [`network`]: networks, their composition, and maps of networks
//! - [`linrel`]: finite-dimensional linear relations
//! - [`sim`]: fixed-step integration and invariance monitoring

pub mod exprlang;
pub mod graph;
pub mod linrel;
pub mod network;
pub mod opensys;
pub mod sampling;
pub mod sim;
pub mod spaces;
