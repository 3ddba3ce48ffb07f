//! Deep oscillatory neural networks.
//!
//! Networks mix complex-valued static layers with banks of Hopf oscillators
//! integrated by forward Euler. Gradients flow through the unrolled dynamics
//! on a reverse-mode tape, so oscillator frequencies can be trained alongside
//! the weights. The [`tasks`] module generates the synthetic benchmarks.

pub mod activation;
pub mod autodiff;
pub mod conv;
pub mod gradcheck;
pub mod io;
pub mod layers;
pub mod oscillator;
pub mod resonance;
pub mod tasks;
pub mod tensor;
pub mod training;

pub use activation::{split_activation, Activation};
pub use autodiff::{Tape, Var};
pub use layers::{LayerSpec, Network};
pub use oscillator::{HopfLayerConfig, InputMode};
pub use tensor::ComplexTensor;
