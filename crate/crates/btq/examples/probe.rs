use btq::cluster::{default_count_hint, solve_cluster};
use btq::geometry::{make_torus, BundleSpec};
use btq::grid::GridSpec;
use btq::kernel::diagonal_profile;
use btq::magnetic::assemble;

fn main() {
    for (p, npts) in [(4usize, 16usize), (8, 24), (12, 32)] {
        let geom = make_torus(1).unwrap();
        let bundle = BundleSpec::trivial(1, p);
        let grid = GridSpec::new(1, npts).unwrap();
        let op = assemble(&geom, &bundle, &grid).unwrap();
        let cl = solve_cluster(&op, default_count_hint(&bundle), 7).unwrap();
        let rep = diagonal_profile(&cl);
        println!("p={p} N={npts} max_dev={:.3e} trace={:.12}", rep.max_deviation, rep.trace);
    }
}
