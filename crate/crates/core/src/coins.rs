//! Randomness handed to robot programs.
//!
//! A program never touches an RNG directly: it asks [`Coins`] for discrete outcomes. A
//! scripted replay can preload those outcomes ("derandomising" the robots); once the
//! script runs out the underlying RNG takes over.

use std::collections::VecDeque;

use rand::{Rng, RngCore};

/// Discrete random choices for one robot activation.
///
/// Scripted values are consumed in order, one per *random* decision:
/// * [`Coins::random_bit`] uses the value as the bit (`0` or nonzero = `1`),
/// * [`Coins::bernoulli`] treats nonzero as success,
/// * [`Coins::index`] uses the value modulo the number of options.
///
/// Decisions with a single possible outcome consume nothing.
pub struct Coins<'a> {
    rng: &'a mut dyn RngCore,
    script: VecDeque<u32>,
}

impl<'a> Coins<'a> {
    pub fn new(rng: &'a mut dyn RngCore) -> Self {
        Self { rng, script: VecDeque::new() }
    }

    pub fn scripted(rng: &'a mut dyn RngCore, values: &[u32]) -> Self {
        Self { rng, script: values.iter().copied().collect() }
    }

    /// `0` with probability 3/4, `1` with probability 1/4.
    pub fn random_bit(&mut self) -> u8 {
        match self.script.pop_front() {
            Some(v) => u8::from(v != 0),
            None => u8::from(self.rng.gen_range(0..4u32) == 0),
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 {
            return false;
        }
        match self.script.pop_front() {
            Some(v) => v != 0,
            None => self.rng.gen_bool(p),
        }
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "cannot choose among zero options");
        if n == 1 {
            return 0;
        }
        match self.script.pop_front() {
            Some(v) => v as usize % n,
            None => self.rng.gen_range(0..n),
        }
    }

    /// Raw generator for continuous draws (cell sampling). Never scripted.
    pub fn rng(&mut self) -> &mut dyn RngCore {
        &mut *self.rng
    }
}
