// Compares the network's hand-derived gradient with central differences.
//
// ```text
// cargo run --release --example gradient_check
// ```

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rxkernel::net::{gradient_check, EmbedNet, KernelRows, Metric, NetConfig};

pub fn run() -> rxkernel::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (batch, width) = (8, 10);
    let mut rows = || Array2::from_shape_fn((batch, width), |_| rng.random_range(0.0..1.0));
    let (wl, tp, vh) = (rows(), rows(), rows());
    let labels = [1, 0, 0, 1, 1, 0, 1, 0];
    let kernel_rows = KernelRows::new(wl.view(), tp.view(), vh.view())?;
    for metric in [Metric::Euclidean, Metric::Cosine] {
        let cfg = NetConfig {
            embed_dim_per_kernel: 12,
            fusion_dim: 6,
            classifier_dim: 6,
            metric,
            seed: 4,
            ..NetConfig::default()
        };
        let net = EmbedNet::new(cfg, width)?;
        let dev = gradient_check(&net, &kernel_rows, &labels, 1e-5)?;
        println!("{metric}: {} parameters, max relative deviation {dev:.2e}", net.params().len());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
