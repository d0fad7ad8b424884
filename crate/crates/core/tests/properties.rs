use proptest::prelude::*;

use polycap::calculus::{gradient_seminorm, Region};
use polycap::capacities::{condenser_capacity, gamma_capacity, theta_capacity, FunctionClassSpec};
use polycap::grid::{build_mask, dilate_mask, CompactMask, Geometry, GridCube, GridFunction};
use polycap::poincare::{poincare_constant, PoincareQuery};
use polycap::polynomials::{eval_poly, poly_deviation, CoeffNorm, Polynomial, Projector};
use polycap::synthesis::{admissible_function, build_lattice, partition_of_unity, run_synthesis};

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn node_set(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(0..n, 1..4).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dilation_composes(nodes in node_set(81), a in 0usize..3, b in 0usize..3) {
        let q = GridCube::unit(2, 9).unwrap();
        let k = CompactMask::from_nodes(&q, &nodes).unwrap();
        let once = dilate_mask(&k, a + b);
        let twice = dilate_mask(&dilate_mask(&k, a), b);
        prop_assert_eq!(once.flags(), twice.flags());
    }

    #[test]
    fn cantor_masks_shrink_with_depth(n in (1usize..4).prop_map(|j| 54 * j + 1), depth in 0u32..3) {
        let q = GridCube::unit(1, n).unwrap();
        let coarse = build_mask(&q, &Geometry::Cantor { depth }).unwrap();
        let fine = build_mask(&q, &Geometry::Cantor { depth: depth + 1 }).unwrap();
        prop_assert!(fine.is_subset_of(&coarse));
    }

    #[test]
    fn node_coordinates_are_stable(dim in 1usize..3, n in (2usize..6).prop_map(|j| 2 * j + 1)) {
        let a = GridCube::unit(dim, n).unwrap();
        let b = GridCube::unit(dim, n).unwrap();
        for i in 0..a.node_count() {
            prop_assert_eq!(a.coords(i), b.coords(i));
        }
    }

    #[test]
    fn seminorm_is_homogeneous_and_subadditive(
        u in values(81), v in values(81), c in -3.0f64..3.0, k in 0usize..3, p in 1.0f64..4.0,
    ) {
        let q = GridCube::unit(2, 9).unwrap();
        let u = GridFunction::new(&q, u).unwrap();
        let v = GridFunction::new(&q, v).unwrap();
        let s = |f: &GridFunction| gradient_seminorm(f, k, p, Region::Whole).unwrap().value;
        let su = s(&u);
        prop_assert!((s(&u.scale(c)) - c.abs() * su).abs() <= 1e-9 * (1.0 + su));
        prop_assert!(s(&u.combine(1.0, &v, 1.0).unwrap()) <= su + s(&v) + 1e-9);
    }

    #[test]
    fn stencils_annihilate_low_degree(coeffs in values(6), k in 1usize..4) {
        let q = GridCube::unit(2, 9).unwrap();
        let deg = k - 1;
        let len = polycap::polynomials::basis_dim(2, deg);
        let poly = Polynomial::new(2, deg, coeffs[..len].to_vec()).unwrap();
        let u = eval_poly(&poly, &q).unwrap();
        let s = gradient_seminorm(&u, k, 2.0, Region::Whole).unwrap().value;
        prop_assert!(s < 1e-9, "{}", s);
    }

    #[test]
    fn seminorm_grows_with_region(u in values(81), small in node_set(81), extra in node_set(81)) {
        let q = GridCube::unit(2, 9).unwrap();
        let u = GridFunction::new(&q, u).unwrap();
        let a = dilate_mask(&CompactMask::from_nodes(&q, &small).unwrap(), 2);
        let b = a.union(&CompactMask::from_nodes(&q, &extra).unwrap()).unwrap();
        let s = |m: &CompactMask| gradient_seminorm(&u, 1, 2.0, Region::Mask(m)).unwrap().value;
        prop_assert!(s(&a) <= s(&b) + 1e-12);
    }

    #[test]
    fn projection_is_linear_and_idempotent(
        u in values(81), v in values(81), a in -2.0f64..2.0, b in -2.0f64..2.0, r in 0usize..3,
    ) {
        let q = GridCube::unit(2, 9).unwrap();
        let proj = Projector::for_grid(&q, r, None).unwrap();
        let (cu, cv) = (proj.coefficients(&u), proj.coefficients(&v));
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        for (i, c) in proj.coefficients(&mix).iter().enumerate() {
            prop_assert!((c - (a * cu[i] + b * cv[i])).abs() < 1e-10);
        }
        for (x, y) in proj.coefficients(&proj.values(&cu)).iter().zip(&cu) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        let poly = proj.polynomial(cu.clone());
        for j in 0..=r {
            let sum = poly.degree_part(j).add(&poly.complement_part(j)).unwrap();
            prop_assert_eq!(sum.coeffs(), poly.coeffs());
        }
    }

    #[test]
    fn deviation_ignores_order_and_duplicates(
        pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 6..9), k in 0usize..3,
    ) {
        let base = poly_deviation(&pts, k, CoeffNorm::L2).unwrap().value;
        let mut shuffled: Vec<Vec<f64>> = pts.iter().rev().cloned().collect();
        shuffled.push(pts[0].clone());
        let other = poly_deviation(&shuffled, k, CoeffNorm::L2).unwrap().value;
        prop_assert!((base - other).abs() <= 1e-6 * (1.0 + base), "{} vs {}", base, other);
    }

    #[test]
    fn capacities_grow_with_k(small in node_set(9), extra in node_set(9), m in 1usize..3) {
        let q = GridCube::unit(1, 9).unwrap();
        let a = CompactMask::from_nodes(&q, &small).unwrap();
        let b = a.union(&CompactMask::from_nodes(&q, &extra).unwrap()).unwrap();
        let tol = |x: f64| 1e-8 * (1.0 + x.abs());
        let ca = condenser_capacity(&q, &a, m, 2.0).unwrap().value;
        let cb = condenser_capacity(&q, &b, m, 2.0).unwrap().value;
        prop_assert!(ca <= cb + tol(cb));
        let class = |k: &CompactMask| FunctionClassSpec::partial(m - 1, m, k.clone()).unwrap();
        let ga = gamma_capacity(&q, &class(&a), m, 0, 2.0).unwrap().value;
        let gb = gamma_capacity(&q, &class(&b), m, 0, 2.0).unwrap().value;
        prop_assert!(ga <= gb + tol(gb));
        let pa = poincare_constant(&PoincareQuery::new(class(&a), 0)).unwrap().value;
        let pb = poincare_constant(&PoincareQuery::new(class(&b), 0)).unwrap().value;
        prop_assert!(pb <= pa + tol(pa));
        let t = theta_capacity(&q, &class(&b), m, 0, 2.0, 4.0).unwrap().value;
        prop_assert!(t <= 1.0);
    }

    #[test]
    fn partition_sums_to_one(cells in prop::sample::select(vec![4usize, 8]), width in 0.125f64..0.25, pass in 0usize..2) {
        let q = GridCube::unit(1, 65).unwrap();
        let k = CompactMask::from_nodes(&q, &[32]).unwrap();
        let lattice = build_lattice(&q, 1.0 / cells as f64, &k, width).unwrap();
        let phis = partition_of_unity(&lattice, pass).unwrap();
        for i in 0..q.node_count() {
            let s: f64 = phis.iter().map(|f| f.values()[i]).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(phis.iter().all(|f| f.values()[i] >= 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn synthesis_runs_clean(node in 300usize..725) {
        let q = GridCube::unit(1, 1025).unwrap();
        let k = CompactMask::from_nodes(&q, &[node]).unwrap();
        let u = admissible_function(&k, 1, 0, 1.0).unwrap();
        let reps = run_synthesis(&u, &k, 1, 2.0, &[0.25, 0.125], &Default::default()).unwrap();
        for r in &reps {
            prop_assert!(r.complete && r.chain_holds);
            prop_assert!(r.covered.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(r.max_membership_residual < 1e-8);
        }
    }
}
