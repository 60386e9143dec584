//! Operator harness: synthetic fixture generation with brute-force oracle
//! answers, the question bank, and the ablation evaluation grid.

pub mod eval;
pub mod fixture;
pub mod oracle;
pub mod shapewrite;
