use xqjoin::cli::{check_three_way, PipelineConfig};
use xqjoin::corpus;
use xqjoin::evaluator::generate::{gen_query, Vocabulary};
use xqjoin::frontend::render;

fn main() {
    let to: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(150);
    let config = PipelineConfig::default();
    let t0 = std::time::Instant::now();
    for (uri, doc) in corpus::small_docs() {
        let vocab = Vocabulary::from_doc(uri, &doc);
        for seed in 0..to {
            let e = gen_query(seed, 4, &vocab);
            eprintln!("seed {seed} on {uri}: {}", render(&e));
            if let Some(d) = check_three_way(seed, &e, &doc, &config) {
                println!("DIVERGENCE at seed {seed} on {uri}: {}\n{}", d.detail, d.artifacts);
                std::process::exit(3);
            }
        }
    }
    println!("all ok in {:?}", t0.elapsed());
}
