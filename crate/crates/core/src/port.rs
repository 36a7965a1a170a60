//! The boundary between the protocol and whoever is playing: a simulated
//! participant or a human connected through the service.

use crate::error::Result;
use crate::gp::{OrdinalLabel, Preference};
use crate::record::Phase;
use crate::task::BestOfThree;
use crate::wire::ModelUpdate;

#[derive(Debug, Clone, PartialEq)]
pub enum ProgressEvent {
    Phase { phase: Phase, iteration: usize, total: usize },
    Models(ModelUpdate),
}

pub trait UserPort {
    /// Plays three attempts at `assist`, one per seed.
    fn play(&mut self, assist: f64, seeds: [u64; 3]) -> Result<BestOfThree>;

    /// Easy/moderate/hard rating of the trial just played.
    fn rate(&mut self, assist: f64, seed: u64) -> Result<OrdinalLabel>;

    /// Which of the last two trials felt harder.
    fn compare(&mut self, prev: f64, curr: f64, seed: u64) -> Result<Preference>;

    /// Untimed free play before any measurement.
    fn warmup(&mut self) -> Result<()> {
        Ok(())
    }

    fn notify(&mut self, _event: &ProgressEvent) {}
}

impl<T: UserPort + ?Sized> UserPort for &mut T {
    fn play(&mut self, assist: f64, seeds: [u64; 3]) -> Result<BestOfThree> {
        (**self).play(assist, seeds)
    }

    fn rate(&mut self, assist: f64, seed: u64) -> Result<OrdinalLabel> {
        (**self).rate(assist, seed)
    }

    fn compare(&mut self, prev: f64, curr: f64, seed: u64) -> Result<Preference> {
        (**self).compare(prev, curr, seed)
    }

    fn warmup(&mut self) -> Result<()> {
        (**self).warmup()
    }

    fn notify(&mut self, event: &ProgressEvent) {
        (**self).notify(event)
    }
}
