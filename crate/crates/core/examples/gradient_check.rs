//! Central finite-difference check of the tape against a small two-layer
//! network: ReLU MLP, layer norm and a softmax cross-entropy loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use finex::tensor::gradcheck::{check_inputs, STEP};
use finex::tensor::Tensor;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn main() -> finex::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs = vec![
        random(&mut rng, &[4, 6]), // x
        random(&mut rng, &[6, 5]), // w1
        random(&mut rng, &[5]),    // b1
        random(&mut rng, &[5]),    // gamma
        random(&mut rng, &[5]),    // beta
        random(&mut rng, &[5, 3]), // w2
    ];
    let report = check_inputs(&inputs, |t, v| {
        let h = t.matmul(v[0], v[1])?;
        let h = t.add_row_bias(h, v[2])?;
        let h = t.relu(h)?;
        let h = t.layer_norm(h, v[3], v[4], 1e-5)?;
        let logits = t.matmul(h, v[5])?;
        t.cross_entropy(logits, &[0, 2, 1, 1])
    })?;
    println!("step {STEP:e}: checked {} entries, max relative error {:.3e}", report.checked, report.max_rel_err);
    if let Some((input, offset)) = report.worst {
        println!("worst entry: input {input}, offset {offset}");
    }
    assert!(report.max_rel_err < 1e-4);
    Ok(())
}
