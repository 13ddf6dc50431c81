//! Function records: parsing, operand normalization, instruction-level
//! CFGs, def-use analysis and leakage-free dataset splits.

pub mod cfg;
pub mod defuse;
pub mod normalize;
pub mod record;
pub mod split;

pub use cfg::{build_fine_grained_cfg, extract_control_flow_sequences, FineGrainedCfg};
pub use defuse::compute_defuse_pairs;
pub use normalize::{normalize_instruction, normalize_record};
pub use record::{
    parse_function_records, write_function_records, Arch, Edge, EdgeKind, FunctionRecord, Instruction, OptLevel,
};
pub use split::{split_by_source, DatasetSplit};
