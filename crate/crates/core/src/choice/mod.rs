pub mod dynamic;
pub mod scheme;
pub mod slot;

pub use dynamic::{
    completion_choice, dynamic_reserves_choice, sub_choice, ChoiceTrace, DynamicReservesSchool, GroupTrace,
};
pub use scheme::{
    check_monotonic, CapacityTransferScheme, Lattice, MonotonicityCondition, MonotonicityViolation,
    DEFAULT_MONOTONICITY_CAP,
};
pub use slot::{
    artificial_market, artificial_type, convert_instance, convert_slot_specific, slot_specific_choice,
    SlotSpecificSchool,
};
