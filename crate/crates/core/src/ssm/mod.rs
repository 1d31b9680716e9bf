//! The state-space model on SPD sequences: discretized scalar dynamics,
//! the recurrent wFM/translation path, the convolutional path with
//! attention, and the log-map softmax readout.

mod attention;
mod dynamics;
pub(crate) mod graph;
pub(crate) mod model;
mod params;

pub use attention::{apply_attention, apply_attention_guarded, spa_attention, Attended};
pub use dynamics::{discretize, lag_weights, scalar_ssm_kernel, scalar_ssm_oracle, ScalarSsmRun};
pub use model::{
    attention_trace, final_output, forward_conv, model_forward, observe, readout, run_recurrent, state_update,
    AttentionTrace, TANGENT_RADIUS,
};
pub use params::{
    DynamicsParams, InitialState, LayerParams, Mode, ModelConfig, ModelParams, ParamFamily, ReadoutParams,
};
