mod common;

use common::*;
use formfactor::scorer::TENSOR_NAMES;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradient_matches_central_differences() {
    let vocab = small_vocab(30);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for b in 0..5 {
        let p = random_params(b, &vocab, 4);
        let batch = random_batch(&mut rng, vocab.len(), 4, 8);
        for (name, err) in gradient_check(&batch, &p, 1e-4, 25, 1e-9, &mut rng) {
            assert!(err <= 1e-3, "batch {b} {name}: rel err {err}");
        }
    }
}

#[test]
fn every_tensor_is_checked() {
    let vocab = small_vocab(10);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = random_params(1, &vocab, 2);
    let batch = random_batch(&mut rng, vocab.len(), 2, 2);
    let names: Vec<_> = gradient_check(&batch, &p, 1e-4, 1, 1e-9, &mut rng)
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    assert_eq!(names, TENSOR_NAMES);
}
