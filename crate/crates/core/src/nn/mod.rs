//! Circular 1D CNN engine with hand-written backward passes.

mod model_io;
mod network;
pub mod ops;
mod params;
mod presets;
mod spec;
mod tensor;

pub use model_io::{load_network, read_network, save_network, write_network, MODEL_MAGIC};
pub use network::{ForwardCache, Mode, Network};
pub use ops::{
    attention_forward, bottleneck_forward, circular_conv_forward, circular_pad, conv_output_len, dense_forward,
    dropout_forward, layer_norm_backward, layer_norm_forward, pad_amounts, softmax, swish, swish_backward,
    AttentionParams, DropoutMode, LAYER_NORM_EPS,
};
pub use params::{Param, Parameters};
pub use presets::{
    Preset, PresetTraining, AP10_INPUT, AP10_LAYERS, AP10_PARAMS, AP1_INPUT, AP1_LAYERS, AP1_PARAMS, AP2_INPUT,
    AP2_LAYERS, AP2_PARAMS, AP4_INPUT, AP4_LAYERS, AP4_PARAMS, AP7_INPUT, AP7_LAYERS, AP7_PARAMS,
};
pub use spec::{param_count, propagate, shape_after, Activation, LayerShape, LayerSpec, NetworkSpec, OutputActivation};
pub use tensor::Tensor;
