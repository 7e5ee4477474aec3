#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use twosite::normal_form;
use twosite::{FullState, TwoSiteModel};

pub fn model() -> TwoSiteModel {
    TwoSiteModel::default()
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Random state inside the nonsingular region of both decoupling matrices.
pub fn random_state(m: &TwoSiteModel, rng: &mut StdRng) -> FullState {
    normal_form::sample_admissible_state(m, |lo, hi| rng.random_range(lo..hi))
}
