use canyonsim::engine::*;
use canyonsim::materials::MaterialRegistry;
use canyonsim::propagation::*;
use canyonsim::scene::*;

#[test]
fn probe_path_gains() {
    let registry = MaterialRegistry::with_defaults();
    let cfg = SimConfig { experiment: Experiment::Fig5, ..SimConfig::default() };
    let canyon = build_canyon(&cfg.canyon).unwrap();
    let mut dp = cfg.deployment.clone();
    dp.setup = Setup::Setup1;
    dp.gap_m = 50.0;
    let tagged = TaggedPlacement { lane: 1, distance_m: 50.0, center_x: 100.0 };
    let scene = generate_deployment(&dp, &canyon, Some(tagged), 12345).unwrap();
    let (_tx, rx) = scene.tagged_link.unwrap();
    let geo = SceneGeometry::compile(&scene, &registry).unwrap();
    let rxv = scene.vehicle(rx);
    let rx_rear = rxv.mount(MountLocation::Rear, 200.0);
    for id in [18u32, 22, 2] {
        let u = scene.vehicle(id);
        let uf = u.mount(MountLocation::Front, 200.0);
        println!("== id {} lane {} heading {} front mount at ({:.2},{:.2},{:.2}) boresight ({:.0},{:.0},{:.0})",
            id, u.lane, u.heading, uf.position.x, uf.position.y, uf.position.z,
            uf.boresight.x, uf.boresight.y, uf.boresight.z);
        let paths = trace_paths(&geo, uf.position, rx_rear.position, TraceOptions { max_order: 1 });
        for p in &paths {
            let g = path_gain_db(p, &uf, &rx_rear, &cfg.radio, &registry);
            let hop_desc: Vec<String> = p.hops.iter().map(|h| format!("({:.1},{:.1},{:.2})", h.x, h.y, h.z)).collect();
            println!("  len {:.2} bounces {} gain {:.1} dB hops {}", p.total_length, p.bounces.len(), g, hop_desc.join(" -> "));
        }
    }
}
