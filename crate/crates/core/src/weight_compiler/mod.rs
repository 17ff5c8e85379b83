//! Explicit weights for the interaction, gating and decrementing gadgets and
//! for the exact arithmetic programs built from them.

mod builder;
mod compose;
mod gadgets;
mod ops;

pub use builder::{
    CompiledProgram, Contract, ContractSlots, DecrementRun, HeadSpec, ProgramBuilder, ProgramFile, ProgramSpec,
    TokenSlot,
};
pub use compose::parallel_compose;
pub use gadgets::{
    build_decrement_ffn, build_gating_ffn, build_interaction_head, interaction_weight, DataKernel, GateSide,
};
pub use ops::{
    compile_const_add, compile_const_mul, compile_division, compile_power_series, compile_product, compile_rth_power,
    compile_square, compile_sum_tokens, division_order, division_stage, stages_for, DivisionSeries,
};
