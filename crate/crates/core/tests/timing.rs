use canyonsim::engine::*;
use canyonsim::mac::Scheme;
use canyonsim::materials::MaterialRegistry;
use canyonsim::scene::Setup;
use std::time::Instant;

#[test]
fn timing_probe() {
    let registry = MaterialRegistry::with_defaults();
    let cfg = SimConfig { experiment: Experiment::Fig5, ..SimConfig::default() };
    for (gap, scheme) in [
        (10.0, Scheme::RaCsma),
        (10.0, Scheme::Adaptive),
        (10.0, Scheme::Tdma),
        (0.5, Scheme::RaCsma),
        (0.5, Scheme::Uncoordinated),
        (50.0, Scheme::RaCsma),
    ] {
        let t = Instant::now();
        let r = run_replication(&cfg, &registry, scheme, Setup::Setup1, gap, 0).unwrap();
        println!(
            "gap {gap} {:?}: {:.2}s sinr={:.2}dB se={:.3} inr_lin={:.3} dom={} rec={} radar={:.2} delay={:.2e}",
            scheme,
            t.elapsed().as_secs_f64(),
            10.0 * r.mean_sinr_linear.log10(),
            r.mean_spectral_efficiency,
            r.mean_inr_linear,
            r.collision_domain_size,
            r.recorded_slots,
            r.radar_success_fraction,
            r.mean_access_delay_s,
        );
    }
}
