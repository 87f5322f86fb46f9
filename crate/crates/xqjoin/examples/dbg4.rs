use xqjoin::algebra::Plan;
use xqjoin::compiler::compile;
use xqjoin::corpus;
use xqjoin::evaluator::generate::{gen_query, Vocabulary};
use xqjoin::evaluator::{eval_plan, items_of};
use xqjoin::frontend::normalize;
use xqjoin::isolator::isolate;
use xqjoin::properties::infer;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (uri, doc) = corpus::small_docs().into_iter().next().unwrap();
    let vocab = Vocabulary::from_doc(uri, &doc);
    let e = gen_query(seed, 4, &vocab);
    let core = normalize(&e);
    let compiled = compile(&core).unwrap();
    let (isolated, report) = isolate(&compiled.plan);
    let expected = items_of(&eval_plan(&compiled.plan, &doc).unwrap());
    for (i, s) in report.steps.iter().enumerate() {
        let before = Plan { store: isolated.store.clone(), root: s.before };
        let after = Plan { store: isolated.store.clone(), root: s.after };
        let a = items_of(&eval_plan(&before, &doc).unwrap());
        let b = items_of(&eval_plan(&after, &doc).unwrap());
        if a != b {
            println!("step {i}: rule {} at {} breaks: {:?} -> {:?}", s.rule, s.node, a, b);
            println!("node: {:?}", isolated.op(s.node));
            println!("== before ==\n{}", before.dump());
            let props = infer(&before);
            println!("== props(before) ==\n{}", props.dump_for(&before));
            println!("== after ==\n{}", after.dump());
            return;
        }
    }
    println!("all {} steps fine, expected {:?}", report.steps.len(), expected);
}
