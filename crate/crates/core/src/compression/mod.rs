pub mod pipeline;
pub mod quantize;
pub mod subband;
pub mod waterfill;

pub use pipeline::{
    compress_pipeline, compress_pipeline_with, decompress_pipeline, interior_mse,
    train_subband_models, CompressOptions, CompressedBlob, SubbandModels,
};
pub use quantize::{dequantize, quantize_gaussian, Codebook};
pub use subband::{subband_decompose, subband_reconstruct, SubbandPlan, SubbandSignal};
pub use waterfill::{allocate_distortion, RateAllocation};
