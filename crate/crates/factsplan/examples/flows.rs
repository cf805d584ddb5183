use factsplan::acpf::*;
use factsplan::grid::parse_case;

fn main() {
    let text = std::fs::read_to_string("crates/factsplan/cases/case30.m").unwrap();
    let scale: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let net = parse_case(&text).unwrap().scale_loads(scale).unwrap();
    let cfg = PfConfig::default();
    let sol = solve_pf(&net, &SystemState::flat(&net), &Loads::from_network(&net),
                       &DispatchSpec::from_network(&net), &cfg).unwrap();
    let sq = apparent_sq(&net, &sol.state).unwrap();
    let nl = net.n_branch();
    for l in 0..nl {
        let rate = net.pu.s_rate[l];
        let s = sq[l].sqrt().max(sq[nl + l].sqrt());
        if rate > 0.0 && s > 0.9 * rate {
            let br = net.branch(l);
            println!("line {}-{} rate {:.3} |S| {:.4}  ({:+.1}%)", br.from, br.to, rate, s, 100.0*(s/rate-1.0));
        }
    }
    println!("q_limited buses: {:?}", sol.q_limited.iter().map(|&i| net.bus(i).id).collect::<Vec<_>>());
    for i in 0..net.n_bus() {
        let v = sol.state.v[i];
        if v < net.pu.v_min[i] + 0.002 || v > net.pu.v_max[i] - 0.002 {
            println!("bus {} v {:.4} limits [{}, {}]", net.bus(i).id, v, net.pu.v_min[i], net.pu.v_max[i]);
        }
    }
}
