mod common;

use common::*;
use qahm::embedding::{find_embedding, find_embedding_with, EmbeddingSearch};
use qahm::rng::stream;
use qahm::{Embedding, HardwareGraph, QahmError, SpinVector, Topology};

#[test]
fn chimera_counts() {
    let g = HardwareGraph::chimera(16, 16, 4).unwrap();
    assert_eq!(g.node_count(), 2048);
    // 16 intra-cell edges per cell plus 4 per adjacent cell pair in each direction.
    assert_eq!(g.edge_count(), 256 * 16 + 2 * 15 * 16 * 4);
    assert_eq!(g.max_degree(), 6);
    assert_eq!(g.topology(), Topology::Chimera { m: 16, n: 16, t: 4 });
}

#[test]
fn hardware_text_round_trip() {
    let g = HardwareGraph::chimera(2, 3, 2).unwrap();
    assert_eq!(HardwareGraph::from_text(&g.to_text()).unwrap(), g);
}

#[test]
fn validator_rejects_broken_chains() {
    let g = HardwareGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
    assert!(Embedding::new(vec![vec![0, 1], vec![2, 3]], g.clone()).is_ok());
    assert!(matches!(
        Embedding::new(vec![vec![0, 2], vec![1]], g.clone()),
        Err(QahmError::InvalidEmbedding(_))
    ));
    assert!(Embedding::new(vec![vec![0], vec![0, 1]], g.clone()).is_err());
    assert!(Embedding::new(vec![vec![0], vec![3]], g).is_err());
}

#[test]
fn router_embeds_small_cliques() {
    let hw = HardwareGraph::chimera(4, 4, 4).unwrap();
    let search = EmbeddingSearch {
        chimera_layout: false,
        ..EmbeddingSearch::default()
    };
    for n in [2, 3, 5, 6] {
        let e = find_embedding_with(n, &hw, search, &mut stream(n as u64, &[])).unwrap();
        assert_eq!(e.logical_count(), n);
        e.validate().unwrap();
    }
}

#[test]
fn router_on_generic_graph() {
    // A 6x6 king's graph has K_4 subgraphs and enough room for K_5.
    let idx = |r: usize, c: usize| r * 6 + c;
    let mut edges = Vec::new();
    for r in 0..6 {
        for c in 0..6 {
            for (dr, dc) in [(0, 1), (1, 0), (1, 1), (1, -1i32)] {
                let (nr, nc) = (r + dr, c as i32 + dc);
                if nr < 6 && (0..6).contains(&nc) {
                    edges.push((idx(r, c), idx(nr, nc as usize)));
                }
            }
        }
    }
    let hw = HardwareGraph::from_edges(36, edges).unwrap();
    find_embedding(5, &hw, &mut stream(1, &[])).unwrap().validate().unwrap();
}

#[test]
fn too_many_variables_fail() {
    let hw = HardwareGraph::chimera(1, 1, 2).unwrap();
    let search = EmbeddingSearch {
        max_restarts: 3,
        max_rounds: 20,
        ..EmbeddingSearch::default()
    };
    assert!(matches!(
        find_embedding_with(5, &hw, search, &mut stream(0, &[])),
        Err(QahmError::EmbeddingNotFound { .. })
    ));
}

#[test]
fn embedding_text_round_trip() {
    let hw = HardwareGraph::chimera(4, 4, 4).unwrap();
    let e = find_embedding(10, &hw, &mut stream(3, &[])).unwrap();
    assert_eq!(Embedding::from_text(&e.to_text(), hw).unwrap(), e);
}

#[test]
fn programmed_hamiltonian_preserves_logical_energy() {
    let hw = HardwareGraph::chimera(4, 4, 4).unwrap();
    let e = find_embedding(6, &hw, &mut stream(4, &[])).unwrap();
    let mut rng = stream(5, &[]);
    let logical = random_ising(6, 1.0, 0.0, 1.0, &mut rng);
    let strength = 2.5;
    let phys = e.program_hamiltonian(&logical, strength).unwrap();
    let intra: usize = e
        .chains()
        .iter()
        .map(|c| {
            let mut k = 0;
            for (a, &p) in c.iter().enumerate() {
                k += c[a + 1..].iter().filter(|&&q| hw.has_edge(p, q)).count();
            }
            k
        })
        .sum();
    for _ in 0..50 {
        let u = spin_vec(&random_spins(6, &mut rng));
        let z = e.replica_map(&u).unwrap();
        let lhs = phys.energy(&z).unwrap();
        let rhs = logical.energy(&u).unwrap() - strength * intra as f64;
        assert!((lhs - rhs).abs() < 1e-10);
    }
}

#[test]
fn replica_then_vote_is_identity_small() {
    let hw = HardwareGraph::chimera(4, 4, 4).unwrap();
    let e = find_embedding(7, &hw, &mut stream(6, &[])).unwrap();
    let mut rng = stream(7, &[]);
    for k in 0..1 << 7 {
        let u = SpinVector::from_index(k, 7);
        assert_eq!(e.majority_vote(&e.replica_map(&u).unwrap(), &mut rng).unwrap(), u);
    }
}

#[test]
fn vote_breaks_ties_both_ways() {
    let hw = HardwareGraph::from_edges(2, [(0, 1)]).unwrap();
    let e = Embedding::new(vec![vec![0, 1]], hw).unwrap();
    let z = SpinVector::new(vec![1.0, -1.0]).unwrap();
    let mut rng = stream(8, &[]);
    let ups = (0..2000)
        .filter(|_| e.majority_vote(&z, &mut rng).unwrap()[0] > 0.0)
        .count();
    assert!((800..1200).contains(&ups));
}
