use xqjoin::compiler::compile;
use xqjoin::frontend::{normalize, parse};
use xqjoin::isolator::{isolate, trace_text};
use xqjoin::properties::infer;

fn main() {
    let q = std::env::args().nth(1).unwrap_or_else(|| xqjoin::corpus::Q1.to_string());
    let core = normalize(&parse(&q).unwrap());
    let compiled = compile(&core).unwrap();
    println!("== compiled ==\n{}", compiled.plan.dump());
    let (isolated, report) = isolate(&compiled.plan);
    println!("== trace ==\n{}", trace_text(&isolated, &report));
    println!("== isolated ==\n{}", isolated.dump());
    let props = infer(&isolated);
    println!("== props ==\n{}", props.dump_for(&isolated));
}
