use wbkmeans::{
    kernel_run, run, ClusterBounds, Execution, ImplicitSite, KernelFunction, RunConfig, WeightedDataset,
};

fn rings() -> WeightedDataset {
    let mut pts = Vec::new();
    for (radius, phase) in [(1.0f64, 0.0f64), (5.0, 0.3)] {
        for t in 0..10 {
            let a = phase + t as f64 * std::f64::consts::TAU / 10.0;
            pts.push(vec![radius * a.cos(), radius * a.sin()]);
        }
    }
    WeightedDataset::unweighted(&pts).unwrap()
}

/// Share of points whose majority cluster matches their ring's majority cluster.
fn purity(labels: &[usize]) -> f64 {
    let agree = |ring: &[usize]| {
        let ones = ring.iter().filter(|&&l| l == 1).count();
        ones.max(ring.len() - ones)
    };
    let (inner, outer) = labels.split_at(10);
    let distinct = {
        let major = |ring: &[usize]| (ring.iter().filter(|&&l| l == 1).count() * 2 > ring.len()) as usize;
        major(inner) != major(outer)
    };
    if !distinct {
        return 0.5;
    }
    (agree(inner) + agree(outer)) as f64 / 20.0
}

#[test]
fn gaussian_kernel_separates_concentric_rings() {
    let data = rings();
    let bounds = ClusterBounds::balanced(2, 20.0, 0.0).unwrap();
    let sites = [ImplicitSite::Point(0), ImplicitSite::Point(12)];
    let kernel = KernelFunction::Gaussian { bandwidth: 1.0 };
    let out = kernel_run(&data, &bounds, &sites, kernel, &RunConfig::default(), Execution::Parallel).unwrap();
    let p = purity(&out.assignment.hard_labels());
    assert!(p >= 0.9, "gaussian purity {p}");

    let plain = run(&data, &bounds, &[data.point(0).to_vec(), data.point(12).to_vec()], &RunConfig::default()).unwrap();
    let q = purity(&plain.assignment.hard_labels());
    assert!(q < 0.9, "linear purity {q}");
}
