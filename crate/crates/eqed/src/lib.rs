//! Localization of injected single-cycle flip-flop errors in gate-level
//! designs, using dual-MISR signature blocks at block interfaces and
//! bounded-model-checking consistency analysis of the scanned signatures.
//!
//! The pipeline, end to end:
//!
//! 1. [`netlist`] parses a hierarchical gate-level netlist (`.enl` text
//!    format) and elaborates it into a flat graph.
//! 2. [`partition`] splits the design into blocks sized for the checker,
//!    groups boundary signals into interfaces, and plans one dual-MISR
//!    signature block per interface.
//! 3. [`sim`] runs cycle-accurate simulation of the instrumented design,
//!    optionally injecting a single-cycle flip-flop error, and scans the
//!    signature state out at detection.
//! 4. [`bmc`] unrolls a block over the captured window into CNF, constrains
//!    the signature registers to their scanned values, and decides
//!    satisfiability with a built-in CDCL solver (or an external one via
//!    DIMACS).
//! 5. [`localize`] flags the inconsistent block, enumerates (flip-flop,
//!    cycle) error candidates with injection instrumentation, and prunes
//!    aliased candidates by checking their traces against neighboring
//!    blocks' signatures.
//! 6. [`harness`] provides a synthetic design generator, a brute-force
//!    fault-injection oracle, and seeded campaign/tradeoff runners.

pub mod bmc;
pub mod harness;
pub mod localize;
pub mod netlist;
pub mod partition;
pub mod rng;
pub mod signature;
pub mod sim;
