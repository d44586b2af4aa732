//! Fixtures shared by the benchmarks.

use finmem::optimizer::PolicyParams;
use finmem::policies::{init_policy, InitOptions, InitScheme};
use finmem::{Arch, Result, TaskSpec};

/// Symmetric task with `mu = 0.1` and a seeded random weight matrix.
pub fn random_point(arch: Arch, r: f64, seed: u64) -> Result<(TaskSpec, PolicyParams)> {
    let task = TaskSpec::symmetric(0.1, r, arch)?;
    let w = init_policy(&arch, InitScheme::Random, seed, &InitOptions::default())?;
    Ok((task, w))
}
