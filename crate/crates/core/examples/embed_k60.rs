//! Embeds a complete graph into chimera(16,16,4) and reports chain statistics.
//!
//! Usage: `embed_k60 [n] [seed] [router]`; passing `router` skips the native
//! clique layout and uses the congestion router alone.

use std::time::Instant;

use qahm::embedding::{find_embedding_with, EmbeddingSearch};
use qahm::rng::stream;
use qahm::HardwareGraph;

fn main() {
    env_logger::init();
    let arg = |k: usize| std::env::args().nth(k);
    let n: usize = arg(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let seed: u64 = arg(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let search = EmbeddingSearch {
        chimera_layout: arg(3).as_deref() != Some("router"),
        ..EmbeddingSearch::default()
    };
    let hw = HardwareGraph::chimera(16, 16, 4).unwrap();
    let start = Instant::now();
    match find_embedding_with(n, &hw, search, &mut stream(seed, &[])) {
        Ok(e) => {
            let sizes = e.chain_sizes();
            println!(
                "K_{n}: {} qubits, chains {}..{} (reference: 1644 qubits, chains 18..43), {:.2}s",
                e.physical_count(),
                sizes.iter().min().unwrap(),
                sizes.iter().max().unwrap(),
                start.elapsed().as_secs_f64()
            );
        }
        Err(err) => println!("K_{n}: {err} after {:.2}s", start.elapsed().as_secs_f64()),
    }
}
