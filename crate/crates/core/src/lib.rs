//! Tool-augmented reward modeling toolkit.
//!
//! * [`trajectory`]: the staged Thought/Action/Observation/Rationale text
//!   grammar and its segment map.
//! * [`toolbank`]: the seven tools, their registry and record/replay fixtures.
//! * [`forge`]: preference-pair construction, agent orchestration and
//!   corpus filtering.
//! * [`emit`]: loss-masked training records and the pairwise ranking loss.
//! * [`scoring`]: step-wise reward scoring against a model backend.
//! * [`eval`]: accuracy, multiple-choice, tool statistics and reward traces.

pub mod emit;
pub mod eval;
pub mod forge;
pub mod scoring;
pub mod toolbank;
pub mod trajectory;
pub mod util;

pub use toolbank::{FixtureMode, FixtureStore, ToolBank, ToolRequest, ToolResult};
pub use trajectory::{parse, serialize, SegmentKind, SegmentMap, ToolStep, Trajectory};
