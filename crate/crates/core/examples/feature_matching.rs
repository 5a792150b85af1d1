//! Descriptor matching: nearest neighbours with a keep ratio, and the
//! symmetric k-nearest cross-check.

use plenreg::features::{match_bruteforce_l2, match_knn_crosscheck, DescriptorSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> plenreg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dim = 16;
    let base: Vec<Vec<f32>> = (0..40).map(|_| (0..dim).map(|_| rng.random::<f32>()).collect()).collect();
    // the query set is a shuffled, slightly perturbed copy plus 10 distractors
    let mut order: Vec<usize> = (0..base.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut query: Vec<Vec<f32>> = order
        .iter()
        .map(|&i| base[i].iter().map(|v| v + rng.random_range(-0.01..0.01)).collect())
        .collect();
    query.extend((0..10).map(|_| (0..dim).map(|_| rng.random::<f32>()).collect::<Vec<f32>>()));
    let train = DescriptorSet::from_rows(&base)?;
    let query = DescriptorSet::from_rows(&query)?;

    let nn = match_bruteforce_l2(&query, &train, 0.8)?;
    let correct = nn.iter().filter(|m| m.query_idx < order.len() && order[m.query_idx] == m.train_idx).count();
    println!("brute force, best 80%: {} matches, {correct} correct", nn.len());

    for k in [1, 2, 3] {
        let cc = match_knn_crosscheck(&query, &train, k)?;
        let correct = cc.iter().filter(|m| m.query_idx < order.len() && order[m.query_idx] == m.train_idx).count();
        println!("cross-check k = {k}: {} matches, {correct} correct", cc.len());
    }
    Ok(())
}
