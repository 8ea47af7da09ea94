//! Minimal reverse-mode automatic differentiation over dense matrices, and
//! the recurrent and highway layers built on it.

mod gradcheck;
mod graph;
pub mod nn;
mod params;
mod tensor;

pub use gradcheck::{gradient_check, GradCheckReport, FD_STEP, REL_FLOOR};
pub use graph::{Gradients, Graph, GraphError, GraphResult, NodeId};
pub use nn::{bilstm_encode, highway_forward, lstm_sequence, lstm_step, BiLstmParams, HighwayParams, LstmParams};
pub use params::{xavier_uniform, ParamId, ParamStore};
pub use tensor::Tensor;
