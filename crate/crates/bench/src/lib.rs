//! Fixtures shared by the benchmarks.

use gwcrit::{FamilySpec, OffspringFamily};

pub fn stable() -> OffspringFamily {
    OffspringFamily::stable(0.5, 0.5).expect("valid family")
}

pub fn perturbed() -> OffspringFamily {
    OffspringFamily::perturbed(0.5, 0.4, 0.2).expect("valid family")
}

pub fn stable_spec() -> FamilySpec {
    FamilySpec::from(&stable())
}
