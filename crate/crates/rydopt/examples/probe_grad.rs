// scratch probe: energy-vs-regularizer decomposition at convergence
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rydopt::hardware::{Configuration, Encoding, EncodingKind, PulseSet};
use rydopt::problems::ghz_target;
use rydopt::pulse::{cost, optimize_pulses, DescentOptions};

fn main() {
    let enc = Encoding::new(EncodingKind::Dipole, 3);
    let x = Configuration::new(vec![[0.091, 0.511], [-0.397, 0.002], [0.503, 0.24]]).unwrap();
    let h = ghz_target(3, 2).unwrap();
    let steps = 100;

    for rate in [1.0] {
        for seed in [7u64, 8, 9, 10, 11] {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let consts: Vec<f64> = (0..enc.num_channels()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let values = DMatrix::from_fn(enc.num_channels(), steps, |l, _| consts[l]);
            let z0 = PulseSet::new(values, 20.0, 1.0).unwrap();
            let (z, trace) = optimize_pulses(&x, &z0, &h, 1e-4, &enc, 1000, rate, &DescentOptions::default()).unwrap();
            let report = cost(&x, &z, &h, 1e-4, &enc).unwrap();
            println!(
                "rate {rate} seed {seed}: J-err {:.2e} | energy-err {:.2e} | reg {:.2e} | max|z| {:.2}",
                trace.last().unwrap() + 1.0,
                report.energy + 1.0,
                report.regularizer,
                z.values().amax()
            );
        }
    }
}
