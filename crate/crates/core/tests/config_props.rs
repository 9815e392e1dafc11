use hysterelax::config::{Data, MemorySpec, RunConfig};
use proptest::prelude::*;

fn base() -> RunConfig {
    RunConfig::from_toml(
        r#"
[grid]
dim = 2
extent = [1.0, 2.0]
nodes = [5, 9]

[time]
T = 1.0
n = 4

[density]
kind = "gaussian"
beta = 1.0
lambda_support = 2.0

[initial]
L = 1.0
"#,
    )
    .unwrap()
}

const EXPRS: [&str; 4] = ["sin(2*pi*x)*sin(t)", "exp(-x*y) + t", "0.5", "cos(x) - y^2"];

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn effective_config_reparses_equal(
        lx in 0.1f64..10.0,
        ly in 0.1f64..10.0,
        nx in 3usize..40,
        ny in 3usize..40,
        t_end in 0.01f64..5.0,
        n in 1usize..400,
        tol in 1e-14f64..1e-6,
        e in 0usize..4,
        b in 0.0f64..3.0,
        turning in any::<bool>(),
        q in prop::option::of(prop::collection::vec(1.0f64..3.0, 1..4)),
    ) {
        let mut cfg = base();
        cfg.grid.extent = vec![lx, ly];
        cfg.grid.nodes = vec![nx, ny];
        cfg.grid.b = Data::Number(b);
        cfg.time.t_end = t_end;
        cfg.time.n = Some(n);
        cfg.solver.newton_tol = tol;
        cfg.sources.h = Data::Expr(EXPRS[e].into());
        if turning {
            cfg.initial.memory = MemorySpec::Turning;
            cfg.initial.r0 = Some(Data::Expr("0.5 + 0.1*x".into()));
        }
        cfg.monitors.q = q;
        cfg.normalize().unwrap();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}

#[test]
fn tau_and_n_resolve_to_the_same_config() {
    let mut a = base();
    a.time.n = None;
    a.time.tau = Some(0.25);
    a.normalize().unwrap();
    let mut b = base();
    b.normalize().unwrap();
    assert_eq!(a, b);
}
