use comprate_core::enumeration::global_solve_with;
use comprate_core::prob::{
    CostMatrix, DecoderMap, GenerationChannel, LabelPrior, ProblemInstance,
};
use comprate_core::solver::{solve_subproblem, SubproblemSpec};
use rand::{Rng, SeedableRng};

fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().ln()).collect();
    let sum: f64 = raw.iter().sum();
    let mut out: Vec<f64> = raw.iter().map(|&x| x / sum).collect();
    let head: f64 = out.iter().take(n - 1).sum();
    out[n - 1] = 1.0 - head;
    out
}

fn random_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| random_distribution(rng, cols)).collect()
}

fn random_instance(rng: &mut impl Rng) -> ProblemInstance {
    let m = rng.gen_range(2..=3);
    let n = rng.gen_range(2..=3);
    let l = rng.gen_range(2..=3);
    let prior = LabelPrior::new(random_distribution(rng, m)).unwrap();
    let gen = GenerationChannel::new(random_rows(rng, m, n)).unwrap();
    let cost = CostMatrix::new(
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if i == j { 0.0 } else { rng.gen_range(0.1..2.0) })
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    ProblemInstance::new(prior, gen, l, Some(cost)).unwrap()
}

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
    for round in 0..8 {
        let inst = random_instance(&mut rng);
        let budget: f64 = rng.gen_range(0.1..0.7);
        for canonical in [true, false] {
            match global_solve_with(&inst, budget, canonical) {
                Ok(r) => {
                    eprintln!(
                        "round {round} canonical {canonical}: best {:?}",
                        r.best.map(|b| (b.mi_bits, b.decoder.assignment().to_vec()))
                    );
                }
                Err(e) => {
                    eprintln!("round {round} canonical {canonical}: ERR {e}");
                    eprintln!(
                        "  instance m={} n={} l={} prior={:?} gen={:?} cost={:?} budget={budget}",
                        inst.label_count(),
                        inst.data_count(),
                        inst.compressed_size(),
                        inst.prior().probs(),
                        inst.generation().rows(),
                        inst.cost().rows()
                    );
                    // Rerun each decoder to find the failing one.
                    let decs = comprate_core::enumeration::enumerate_decoders(
                        inst.label_count(),
                        inst.compressed_size(),
                        canonical,
                    )
                    .unwrap();
                    for d in decs {
                        let spec = SubproblemSpec::new(&inst, d.clone(), budget).unwrap();
                        let r = solve_subproblem(&spec).unwrap();
                        eprintln!(
                            "  decoder {d}: {:?} iters {} msg {:?} mi {:?}",
                            r.status,
                            r.iterations,
                            r.message,
                            r.mi_bits()
                        );
                    }
                }
            }
        }
    }
}
