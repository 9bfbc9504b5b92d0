pub mod ar;
pub mod model;
pub mod neural;

pub use model::{
    estimate_ar_model, estimate_ar_model_with, ArEstimator, ArInnovationModel, EnvelopeDemod,
    InnovationMode, InnovationSequence,
};
pub use neural::{
    neural_decode, neural_encode, train_autoencoder, NeuralHyper, NeuralInnovationModel,
};
