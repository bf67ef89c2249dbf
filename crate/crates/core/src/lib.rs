//! Active learning for hyperspectral images.
//!
//! Pixels are compressed by a variational autoencoder, the latent points are
//! connected into a kNN diffusion graph, and label queries are chosen where
//! kernel density times diffusion distance to the nearest denser point is
//! largest. Answers are then propagated from dense to sparse regions.

pub mod artifact;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod land;
pub mod scalar;
pub mod synthetic;
pub mod vae;

pub use scalar::Real;

/// Double-precision instantiations used by the CLI, the service and the experiments.
pub type Cube = io::HsiCube<f64>;
pub type Cloud = io::PointCloud<f64>;
pub type Latent = vae::LatentCloud<f64>;
pub type Params = vae::VaeParams<f64>;
pub type Graph = graph::MarkovGraph<f64>;
pub type Eigenpairs = graph::Spectrum<f64>;
pub type Coords = graph::DiffusionCoords<f64>;
pub type Scores = land::LandScores<f64>;
pub type Model = land::LandModel<f64>;
pub type Artifact = artifact::GraphArtifact<f64>;

/// Single-precision variants for inference-only use.
pub type CloudF32 = io::PointCloud<f32>;
pub type ModelF32 = land::LandModel<f32>;
