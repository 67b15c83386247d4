//! Application-aware multipath forwarding for software-defined networks:
//! flow classification, K-shortest-path selection by application class, and
//! a discrete-event simulator to evaluate it.

pub mod classifier;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod linkstate;
pub mod pathfinding;
pub mod sim;
pub mod time;
pub mod topology;
pub mod trace;

pub use classifier::{DecisionTree, LabeledExample, TrainParams};
pub use controller::{Controller, Mode, PolicyConfig};
pub use error::ParseError;
pub use flow::{AppClass, ClassLabel, ClassTable, FeatureVector, FlowId, FlowKey};
pub use time::SimTime;
pub use topology::{EdgeId, NodeId, Topology};
