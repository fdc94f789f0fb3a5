// Temporary: verify the unary net learns given enough steps; deleted later.
use crfsim_core::datagen::generate_scene;
use crfsim_core::pipeline::{evaluate_unary_alone, train_unary};
use crfsim_core::simulator::TrainConfig;

#[test]
#[ignore]
fn unary_memorizes_one_scene() {
    let scene = generate_scene(123, 64, 64);
    let refs = vec![&scene];
    let config = TrainConfig {
        epochs: 300,
        lr: 3e-3,
        batch_size: 1,
        seed: 1,
        threshold: 0.5,
    };
    let (unary, logs) = train_unary(&refs, &refs, &config).unwrap();
    let f = evaluate_unary_alone(&unary, &refs, 0.5).unwrap();
    println!(
        "memorize: F = {f:.4}, first loss {:.4}, last loss {:.4}",
        logs.first().unwrap().train_loss,
        logs.last().unwrap().train_loss
    );
    assert!(f > 0.95, "F = {f}");
}

#[test]
#[ignore]
fn unary_learns_at_scale() {
    let scenes: Vec<_> = (0..220u64).map(|i| generate_scene(5000 + i, 64, 64)).collect();
    let train: Vec<_> = scenes[..200].iter().collect();
    let val: Vec<_> = scenes[200..].iter().collect();
    for (epochs, lr, batch) in [(40usize, 1e-3, 8usize), (80, 1e-3, 8)] {
        let config = TrainConfig {
            epochs,
            lr,
            batch_size: batch,
            seed: 2,
            threshold: 0.5,
        };
        let t = std::time::Instant::now();
        let (unary, logs) = train_unary(&train, &val, &config).unwrap();
        let f = evaluate_unary_alone(&unary, &val, 0.5).unwrap();
        println!(
            "epochs {epochs} lr {lr} batch {batch}: val F {f:.4} (best {:.4}), loss {:.4} -> {:.4}, {:.0}s",
            logs.iter().map(|l| l.val_f).fold(f64::NAN, f64::max),
            logs.first().unwrap().train_loss,
            logs.last().unwrap().train_loss,
            t.elapsed().as_secs_f64(),
        );
    }
}
