use critlab_core::conformal::{conformal_image_triplet, rect_to_disk};
use critlab_core::crossing::{rasterize, rectangle_mesh, Triplet};
use critlab_core::exploration::{crossing_by_exploration, BoundaryCondition, HexDomain};
use critlab_core::lattice::{
    build_graph, critical_probability, sample_configuration, LatticeKind, Mode, PercolationModel, Region, SiteKey,
};
use critlab_core::{rng, stats};

#[test]
fn two_by_two_law_is_product_measure() {
    let p = 0.3;
    let model = PercolationModel::homogeneous(LatticeKind::Square, Mode::Site, p).unwrap();
    let region = Region::from_interior(
        &model.graph,
        [(0, 0), (1, 0), (0, 1), (1, 1)].map(|(m, n)| SiteKey { m, n, s: 0 }),
    );
    let n = 1_000_000u64;
    let mut counts = [0u64; 16];
    for k in 0..n {
        let c = sample_configuration(&model, &region, rng::sample_seed(5, k));
        let mask = (0..4).fold(0usize, |acc, i| acc | (c.status[i] as usize) << i);
        counts[mask] += 1;
    }
    for (mask, &got) in counts.iter().enumerate() {
        let k = mask.count_ones() as i32;
        let q = p.powi(k) * (1.0 - p).powi(4 - k);
        let sd = (n as f64 * q * (1.0 - q)).sqrt();
        assert!(
            (got as f64 - n as f64 * q).abs() < 4.0 * sd,
            "mask {mask:04b}: {got} vs {}",
            n as f64 * q
        );
    }
}

#[test]
fn translated_regions_have_the_same_structure() {
    for kind in [LatticeKind::Square, LatticeKind::Triangular, LatticeKind::Hexagonal] {
        let g = build_graph(kind, 1.0).unwrap();
        let base = Region::cells(&g, 5, 4);
        for (dm, dn) in [(1, 0), (0, 1), (-3, 7)] {
            let interior = base
                .sites
                .iter()
                .zip(&base.interior)
                .filter(|(_, &i)| i)
                .map(|(k, _)| SiteKey {
                    m: k.m + dm,
                    n: k.n + dn,
                    s: k.s,
                });
            assert_eq!(
                Region::from_interior(&g, interior),
                base.translate(dm, dn),
                "{kind:?} by ({dm}, {dn})"
            );
        }
    }
}

#[test]
fn kesten_dichotomy_away_from_threshold() {
    let critical = PercolationModel::critical(LatticeKind::Square, Mode::Site).unwrap();
    let pc = critical_probability(&critical).unwrap();
    let square = Triplet::rectangle(1.0).unwrap();
    let delta = rectangle_mesh(1.0, 256);
    let p_hat = |p: f64, seed: u64| {
        let model = critical.with_uniform(p).unwrap();
        rasterize(&square, &model, delta)
            .unwrap()
            .estimate(500, seed)
            .unwrap()
            .p_hat
    };
    let below = p_hat(pc - 0.05, 1);
    let above = p_hat(pc + 0.05, 2);
    assert!(below < 0.05, "p_hat = {below} below p_c");
    assert!(above > 0.95, "p_hat = {above} above p_c");
}

#[test]
fn crossing_survives_conformal_image() {
    let model = PercolationModel::critical(LatticeKind::Triangular, Mode::Site).unwrap();
    let r = 2.0;
    let rect = Triplet::rectangle(r).unwrap();
    let image = conformal_image_triplet(r, &rect_to_disk(r).unwrap(), 64).unwrap();
    let a = rasterize(&rect, &model, rectangle_mesh(r, 48))
        .unwrap()
        .estimate(20_000, 11)
        .unwrap();
    let b = rasterize(&image, &model, 1.0 / 96.0)
        .unwrap()
        .estimate(20_000, 12)
        .unwrap();
    let z = stats::z_score(a.p_hat, a.std_err, b.p_hat, b.std_err);
    assert!(
        z.abs() < 4.0,
        "rectangle {} vs disk image {} (z = {z:.2})",
        a.p_hat,
        b.p_hat
    );
}

#[test]
fn exploration_matches_connectivity_on_random_wide_domains() {
    let model = PercolationModel::homogeneous(LatticeKind::Triangular, Mode::Site, 0.5).unwrap();
    let mut checked = 0;
    for (cols, rows) in [(16, 16), (16, 5), (9, 16)] {
        let d = HexDomain::new(cols, rows, BoundaryCondition::Corner).unwrap();
        let dt = d.discrete_triplet(&model).unwrap();
        for k in 0..34_000 {
            let c = dt.configuration(rng::sample_seed(cols as u64 * 100 + rows as u64, k));
            assert_eq!(
                crossing_by_exploration(&c, &dt, &d).unwrap(),
                dt.has_crossing(&c),
                "{cols}x{rows} sample {k}"
            );
            checked += 1;
        }
    }
    assert!(checked >= 100_000);
}
