//! Behavior cloning of the basic model: demonstration files, slicing into
//! terminal-target labels, the transformer regressor and the scripted expert.

mod demo;
mod expert;
mod model;
mod slice;

pub use demo::{
    read_demo, write_demo, DemoHeader, DemoSession, DemoWriter, DemonstrationRecord, DEMO_FORMAT, DEMO_VERSION,
    LABEL_FRAME, RECORD_WIDTH,
};
pub use expert::{
    collect_demonstrations, run_expert_episode, DemoEpisode, ExpertAdvice, ExpertConfig, ScriptedExpert,
};
pub use model::{bc_infer, bc_loss, bc_train, bc_train_more, BasicModel, BcTrainConfig, D_SCALE, V_MID};
pub use slice::{slice_demonstrations, slice_records, BcSample};
