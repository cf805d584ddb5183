use factsplan::acpf::*;
use factsplan::grid::parse_case;

fn main() {
    let text = std::fs::read_to_string("crates/factsplan/cases/case30.m").unwrap();
    let scale: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let net = parse_case(&text).unwrap().scale_loads(scale).unwrap();
    let cfg = PfConfig { enforce_q_limits: false, tol: 1e-10, ..Default::default() };
    let sol = solve_pf(&net, &SystemState::flat(&net), &Loads::from_network(&net),
                       &DispatchSpec::from_network(&net), &cfg).unwrap();
    println!("iters {} residual {:.2e}", sol.iterations, sol.residual);
    for i in 0..net.n_bus() {
        println!("{} {:.12} {:.12}", net.bus(i).id, sol.state.v[i], sol.state.theta[i]);
    }
}
