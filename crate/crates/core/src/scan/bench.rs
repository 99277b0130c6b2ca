use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{discretize, ssm_scan_parallel, ssm_scan_sequential, ScanInputs, ScanVariant};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct BenchSweep {
    pub lengths: Vec<usize>,
    pub channels: Vec<usize>,
    pub states: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchSweep {
    fn default() -> Self {
        Self {
            lengths: vec![256, 1024, 4096],
            channels: vec![4, 64, 256],
            states: vec![8],
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub variant: ScanVariant,
    pub t: usize,
    pub d_inner: usize,
    pub n: usize,
    pub nanos_per_element: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "variant,T,d_inner,N,nanos_per_element";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.variant, self.t, self.d_inner, self.n, self.nanos_per_element
        )
    }
}

/// Times both scan variants over the sweep; reports the best of `repeats` runs.
pub fn bench_scan(sweep: &BenchSweep) -> Result<Vec<BenchRow>> {
    if sweep.repeats == 0 {
        return Err(Error::Config("bench repeats must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sweep.seed);
    let mut rows = Vec::new();
    for &t in &sweep.lengths {
        for &e in &sweep.channels {
            for &n in &sweep.states {
                if t == 0 || e == 0 || n == 0 {
                    return Err(Error::Config("bench sizes must be positive".into()));
                }
                let mut a_bar = Vec::with_capacity(t * e * n);
                let mut bx = Vec::with_capacity(t * e * n);
                for _ in 0..t * e * n {
                    let delta = 10f64.powf(rng.gen_range(-3.0..-1.0));
                    let (ab, bb) = discretize(delta, -rng.gen_range(1.0..=n as f64), 1.0);
                    a_bar.push(ab as f32);
                    bx.push((bb * rng.gen_range(-1.0..1.0)) as f32);
                }
                let a_bar = Tensor::new(&[t, e, n], a_bar)?;
                let bx = Tensor::new(&[t, e, n], bx)?;
                let c = Tensor::from_fn(&[t, n], |_| rng.gen_range(-1.0..1.0f32));
                let d = Tensor::full(&[e], 1.0f32);
                let x = Tensor::from_fn(&[t, e], |_| rng.gen_range(-1.0..1.0f32));
                let inputs = ScanInputs {
                    a_bar: &a_bar,
                    bx_bar: &bx,
                    c: &c,
                    d_skip: &d,
                    x: &x,
                };
                for variant in [ScanVariant::Sequential, ScanVariant::Parallel] {
                    let mut best = f64::INFINITY;
                    for _ in 0..sweep.repeats {
                        let start = Instant::now();
                        let y = match variant {
                            ScanVariant::Sequential => ssm_scan_sequential(&inputs)?,
                            ScanVariant::Parallel => ssm_scan_parallel(&inputs)?,
                        };
                        std::hint::black_box(&y);
                        best = best.min(start.elapsed().as_nanos() as f64);
                    }
                    rows.push(BenchRow {
                        variant,
                        t,
                        d_inner: e,
                        n,
                        nanos_per_element: best / (t * e * n) as f64,
                    });
                }
            }
        }
    }
    Ok(rows)
}
