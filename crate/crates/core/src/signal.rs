use crate::real::Real;

/// A sampled real-valued sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal<T> {
    pub samples: Vec<T>,
    pub sample_rate: f64,
}

impl<T: Real> Signal<T> {
    pub fn new(samples: Vec<T>, sample_rate: f64) -> Self {
        Self { samples, sample_rate }
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        Self::new(vec![T::zero(); len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Mean of squared samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples
            .iter()
            .map(|x| {
                let x = x.to_f64_lossy();
                x * x
            })
            .sum::<f64>()
            / self.samples.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|x| x.is_finite())
    }
}
