//! Matching with contracts under dynamic reserves.
//!
//! Schools fill slot groups in a fixed precedence order, each group serving
//! one privilege type, and vacancies left by earlier groups can be handed
//! to later ones through a capacity transfer scheme. Students are matched by
//! the cumulative offer process. The crate also ships exhaustive auditors
//! for stability, incentive and flexibility properties of the mechanism.

pub mod choice;
pub mod cop;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod incentives;
pub mod instance;
pub mod model;
pub mod verify;

pub use error::{Error, Result, Violation};
pub use instance::{validate_instance, ProblemInstance, SchoolChoices, SlotSpecificInstance};
pub use model::{
    Allocation, Contract, ContractId, ContractSet, Market, PreferenceOrder, PriorityOrder, SchoolId, StudentId,
    TypeId,
};
