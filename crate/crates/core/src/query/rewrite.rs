use super::{ComputationGraph, QueryExpr};

/// Splits a query into union-free branches whose answer sets union to the
/// original answers. Union-free graphs come back as a single branch.
pub fn dnf_rewrite(graph: &ComputationGraph) -> Vec<ComputationGraph> {
    if !graph.contains_union() {
        return vec![graph.clone()];
    }
    dnf(&graph.to_expr()).iter().map(ComputationGraph::from_expr).collect()
}

fn dnf(e: &QueryExpr) -> Vec<QueryExpr> {
    match e {
        QueryExpr::Anchor(_) => vec![e.clone()],
        QueryExpr::Project(c, r) => dnf(c).into_iter().map(|b| QueryExpr::Project(Box::new(b), *r)).collect(),
        QueryExpr::Negate(c) => {
            let mut branches = dnf(c);
            if branches.len() == 1 {
                vec![QueryExpr::Negate(Box::new(branches.remove(0)))]
            } else {
                // ¬(b1 ∪ … ∪ bk) = ¬b1 ∩ … ∩ ¬bk
                vec![QueryExpr::Intersect(branches.into_iter().map(|b| QueryExpr::Negate(Box::new(b))).collect())]
            }
        }
        QueryExpr::Intersect(cs) => {
            let mut combos: Vec<Vec<QueryExpr>> = vec![Vec::new()];
            for c in cs {
                let options = dnf(c);
                combos = combos
                    .into_iter()
                    .flat_map(|prefix| {
                        options.iter().map(move |o| {
                            let mut next = prefix.clone();
                            next.push(o.clone());
                            next
                        })
                    })
                    .collect();
            }
            combos.into_iter().map(QueryExpr::Intersect).collect()
        }
        QueryExpr::Union(cs) => cs.iter().flat_map(dnf).collect(),
    }
}

/// Replaces every union `b1 ∪ … ∪ bk` with `¬(¬b1 ∩ … ∩ ¬bk)`. The result
/// carries no structure tag since it matches none of the templates.
pub fn dm_rewrite(graph: &ComputationGraph) -> ComputationGraph {
    if !graph.contains_union() {
        return graph.clone();
    }
    ComputationGraph::from_expr(&dm(&graph.to_expr()))
}

fn dm(e: &QueryExpr) -> QueryExpr {
    match e {
        QueryExpr::Anchor(_) => e.clone(),
        QueryExpr::Project(c, r) => QueryExpr::Project(Box::new(dm(c)), *r),
        QueryExpr::Negate(c) => QueryExpr::Negate(Box::new(dm(c))),
        QueryExpr::Intersect(cs) => QueryExpr::Intersect(cs.iter().map(dm).collect()),
        QueryExpr::Union(cs) => QueryExpr::Negate(Box::new(QueryExpr::Intersect(
            cs.iter().map(|c| QueryExpr::Negate(Box::new(dm(c)))).collect(),
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{set_union, EntitySet, KnowledgeGraph, Triple};
    use crate::query::{ground_truth_answers, sample_query, tests::naive_answers, SampleOptions, Structure};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn branch_shapes() {
        let g = ComputationGraph::from_template(Structure::U2, &[3, 4], &[0, 1]).unwrap();
        let b = dnf_rewrite(&g);
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|x| x.structure() == Some(Structure::P1)));
        assert_eq!(b[0].anchors(), vec![3]);
        assert_eq!(b[1].relations(), vec![1]);

        let g = ComputationGraph::from_template(Structure::Up, &[3, 4], &[0, 1, 2]).unwrap();
        let b = dnf_rewrite(&g);
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|x| x.structure() == Some(Structure::P2)));
        assert_eq!(b[0].relations(), vec![0, 2]);
        assert_eq!(b[1].relations(), vec![1, 2]);

        let g = ComputationGraph::from_template(Structure::P1, &[0], &[0]).unwrap();
        assert_eq!(dnf_rewrite(&g), vec![g.clone()]);
        assert_eq!(dm_rewrite(&g), g);
    }

    #[test]
    fn de_morgan_shape() {
        let g = ComputationGraph::from_template(Structure::U2, &[3, 4], &[0, 1]).unwrap();
        let b1 = QueryExpr::Project(Box::new(QueryExpr::Anchor(3)), 0);
        let b2 = QueryExpr::Project(Box::new(QueryExpr::Anchor(4)), 1);
        let expected = QueryExpr::Negate(Box::new(QueryExpr::Intersect(vec![
            QueryExpr::Negate(Box::new(b1)),
            QueryExpr::Negate(Box::new(b2)),
        ])));
        let rewritten = dm_rewrite(&g);
        assert_eq!(rewritten.to_expr(), expected);
        assert_eq!(rewritten.structure(), None);
        assert_eq!(rewritten.census(), (2, 2, 1, 0, 3));
    }

    #[test]
    fn negated_union_distributes() {
        // ¬(a ∪ b) has one conjunctive branch
        let u = QueryExpr::Union(vec![
            QueryExpr::Project(Box::new(QueryExpr::Anchor(0)), 0),
            QueryExpr::Project(Box::new(QueryExpr::Anchor(1)), 0),
        ]);
        let g = ComputationGraph::from_expr(&QueryExpr::Negate(Box::new(u)));
        let kg = crate::query::tests::six_entity_kg();
        let b = dnf_rewrite(&g);
        assert_eq!(b.len(), 1);
        assert_eq!(ground_truth_answers(&kg, &b[0]).unwrap(), ground_truth_answers(&kg, &g).unwrap());
    }

    fn kg_from_seed(seed: u64) -> KnowledgeGraph {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples: Vec<Triple> = (0..400)
            .map(|_| Triple::new(rng.gen_range(0..60), rng.gen_range(0..3), rng.gen_range(0..60)))
            .collect();
        KnowledgeGraph::new(60, 3, triples).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rewrites_preserve_answers(seed in 0u64..10_000, up in any::<bool>()) {
            let kg = kg_from_seed(seed);
            let s = if up { Structure::Up } else { Structure::U2 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = sample_query(&kg, s, &mut rng, &SampleOptions::default()).unwrap();
            let truth = ground_truth_answers(&kg, &q.graph).unwrap();
            let branches: Vec<EntitySet> = dnf_rewrite(&q.graph)
                .iter()
                .map(|b| ground_truth_answers(&kg, b).unwrap())
                .collect();
            prop_assert_eq!(&set_union(&branches), &truth);
            let dm = dm_rewrite(&q.graph);
            prop_assert_eq!(&ground_truth_answers(&kg, &dm).unwrap(), &truth);
            prop_assert_eq!(&naive_answers(&kg, &dm.to_expr()), &truth);
        }
    }
}
