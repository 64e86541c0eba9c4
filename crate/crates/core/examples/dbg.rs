use wsrm_core::model::{generate_channels, NetworkConfig};
use wsrm_core::robust_second::run_second;
use wsrm_core::sca::ScaOptions;
use wsrm_core::uncertainty::{make_box, UncertaintyMap};

fn main() {
    let cfg = NetworkConfig::uniform(2, 2, 4, 1.0, 10.0).unwrap();
    let ch = generate_channels(&cfg, 2);
    let sets = UncertaintyMap::uniform(2, 4, make_box::<f64>(4, 0.1, None).unwrap());
    for stream in [2u64, 77, 123, 4567] {
        let opts = ScaOptions { seed: stream, max_iters: 30, ..Default::default() };
        let r = run_second(&ch, &sets, &cfg, &opts, false).unwrap();
        let h = &r.state.history;
        let n = h.len();
        let rel = (h[n-1]-h[n-2]).abs()/h[n-2].max(1.0);
        println!("init seed {stream}: iters {} converged {} final {:.4} last-rel {:.1e}", r.state.iteration, r.state.converged, h[n-1], rel);
    }
}
