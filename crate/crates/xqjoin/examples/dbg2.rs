use xqjoin::algebra::Plan;
use xqjoin::compiler::compile;
use xqjoin::frontend::{normalize, parse};
use xqjoin::isolator::isolate;

fn main() {
    let q = std::env::args().nth(1).unwrap_or_else(|| xqjoin::corpus::Q1.to_string());
    let core = normalize(&parse(&q).unwrap());
    let compiled = compile(&core).unwrap();
    let (isolated, report) = isolate(&compiled.plan);
    // Find the first repeated root (oscillation entry).
    let mut seen = std::collections::HashMap::new();
    for (i, s) in report.steps.iter().enumerate() {
        if let Some(j) = seen.insert(s.after, i) {
            println!("step {i} (rule {} at {}) returns to the root of step {j}", s.rule, s.node);
            let a = Plan { store: isolated.store.clone(), root: s.before };
            let b = Plan { store: isolated.store.clone(), root: s.after };
            println!("== state A (before) ==\n{}", a.dump());
            println!("== state B (after) ==\n{}", b.dump());
            let prev = &report.steps[i - 1];
            println!("previous step: rule {} at {}", prev.rule, prev.node);
            return;
        }
    }
    println!("no oscillation; {} steps", report.steps.len());
}
