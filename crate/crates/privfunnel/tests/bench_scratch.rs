use privfunnel::optimize::{optimize_lip_with, optimize_srlip};
use privfunnel::polytope::EnumerationOptions;
use privfunnel::prob::{random_joint_seeded, AttributeSchema};
use std::time::Instant;

#[test]
#[ignore]
fn bench_lip36() {
    let joint = random_joint_seeded(2, 36, 55);
    let schema = AttributeSchema::new(vec![3, 3, 4]).unwrap();
    let opts = EnumerationOptions { max_dim: 40, ..Default::default() };
    let t = Instant::now();
    let rl = optimize_lip_with(&joint, 1.0, &opts).unwrap();
    println!(
        "lip a=36 eps=1: {:.1} ms, {} vertices, utility {:.5}",
        t.elapsed().as_secs_f64() * 1e3,
        rl.diagnostics.total_vertices(),
        rl.utility
    );
    let r = optimize_srlip(&joint, &schema, 1.0, None).unwrap();
    println!("srlip utility {:.5}", r.utility);
    assert!(r.utility <= rl.utility + 1e-8);
}
