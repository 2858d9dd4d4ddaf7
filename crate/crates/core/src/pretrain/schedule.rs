use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::registry::Registry;

/// Scale indices that contribute to one step's losses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepScales {
    pub recon: Vec<usize>,
    pub align: Vec<usize>,
}

impl StepScales {
    /// Scales that need a forward pass, ascending.
    pub fn forward(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.recon.iter().chain(&self.align).copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub trait ScaleSchedule: Send + Sync {
    fn name(&self) -> &'static str;
    fn scales(&self, step: u64, n: usize, rng: &mut ChaCha8Rng) -> StepScales;
}

/// Every scale, every step.
#[derive(Debug, Default, Clone, Copy)]
pub struct AllScales;

impl ScaleSchedule for AllScales {
    fn name(&self) -> &'static str {
        "all"
    }

    fn scales(&self, _step: u64, n: usize, _rng: &mut ChaCha8Rng) -> StepScales {
        let all: Vec<usize> = (0..n).collect();
        StepScales {
            recon: all.clone(),
            align: if n >= 2 { all } else { Vec::new() },
        }
    }
}

/// One scale per step in order; alignment pairs it with one other random scale.
#[derive(Debug, Default, Clone, Copy)]
pub struct CycleScales;

impl ScaleSchedule for CycleScales {
    fn name(&self) -> &'static str {
        "cycle"
    }

    fn scales(&self, step: u64, n: usize, rng: &mut ChaCha8Rng) -> StepScales {
        let cur = (step % n as u64) as usize;
        let align = if n >= 2 {
            let mut other = rng.gen_range(0..n - 1);
            if other >= cur {
                other += 1;
            }
            let mut pair = vec![cur, other];
            pair.sort_unstable();
            pair
        } else {
            Vec::new()
        };
        StepScales {
            recon: vec![cur],
            align,
        }
    }
}

pub fn scale_schedules() -> Registry<dyn ScaleSchedule> {
    let mut r: Registry<dyn ScaleSchedule> = Registry::new("scale schedule");
    r.register("all", || Box::new(AllScales));
    r.register("cycle", || Box::new(CycleScales));
    r
}
