//! Computation graphs for first-order queries and their symbolic answers.
//!
//! A query is a DAG whose leaves are anchor entities and whose inner nodes
//! apply projection, intersection, union or negation to earlier nodes. The
//! fourteen supported shapes are enumerated by [`Structure`].

mod io;
mod rewrite;
mod sample;
mod structure;

use thiserror::Error;

use crate::kg::{set_intersection, set_union, EntityId, EntitySet, KgError, KnowledgeGraph, RelationId};

pub use io::{parse_query, read_queries, serialize_query, write_queries, QueryIoError, QueryRecord};
pub use rewrite::{dm_rewrite, dnf_rewrite};
pub use sample::{sample_distinct, sample_query, sample_query_on, sample_workload, SampleError, SampleOptions, Workload};
pub use structure::Structure;

pub type NodeId = usize;

/// Query as an expression tree; the form used for templates and rewrites.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryExpr {
    Anchor(EntityId),
    Project(Box<QueryExpr>, RelationId),
    Intersect(Vec<QueryExpr>),
    Union(Vec<QueryExpr>),
    Negate(Box<QueryExpr>),
}

/// `r1(e0)`, `(a & b)`, `(a | b)`, `!a`.
impl std::fmt::Display for QueryExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |f: &mut std::fmt::Formatter<'_>, xs: &[QueryExpr], sep: &str| {
            f.write_str("(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                write!(f, "{x}")?;
            }
            f.write_str(")")
        };
        match self {
            QueryExpr::Anchor(e) => write!(f, "e{e}"),
            QueryExpr::Project(x, r) => write!(f, "r{r}({x})"),
            QueryExpr::Intersect(xs) => join(f, xs, " & "),
            QueryExpr::Union(xs) => join(f, xs, " | "),
            QueryExpr::Negate(x) => write!(f, "!{x}"),
        }
    }
}

impl QueryExpr {
    /// Anchor ids in post-order.
    pub fn anchors(&self) -> Vec<EntityId> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let QueryExpr::Anchor(a) = e {
                out.push(*a);
            }
        });
        out
    }

    /// Relation ids in post-order.
    pub fn relations(&self) -> Vec<RelationId> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let QueryExpr::Project(_, r) = e {
                out.push(*r);
            }
        });
        out
    }

    fn walk(&self, f: &mut impl FnMut(&QueryExpr)) {
        match self {
            QueryExpr::Anchor(_) => {}
            QueryExpr::Project(c, _) | QueryExpr::Negate(c) => c.walk(f),
            QueryExpr::Intersect(cs) | QueryExpr::Union(cs) => cs.iter().for_each(|c| c.walk(f)),
        }
        f(self);
    }

    /// Same tree with every anchor and relation id set to zero.
    pub fn skeleton(&self) -> QueryExpr {
        match self {
            QueryExpr::Anchor(_) => QueryExpr::Anchor(0),
            QueryExpr::Project(c, _) => QueryExpr::Project(Box::new(c.skeleton()), 0),
            QueryExpr::Negate(c) => QueryExpr::Negate(Box::new(c.skeleton())),
            QueryExpr::Intersect(cs) => QueryExpr::Intersect(cs.iter().map(Self::skeleton).collect()),
            QueryExpr::Union(cs) => QueryExpr::Union(cs.iter().map(Self::skeleton).collect()),
        }
    }

    /// Replaces anchor and relation slots (numbered in post-order) with ids.
    pub fn instantiate(&self, anchors: &[EntityId], relations: &[RelationId]) -> Option<QueryExpr> {
        let mut next_anchor = 0;
        let mut next_relation = 0;
        let out = self.fill(anchors, relations, &mut next_anchor, &mut next_relation)?;
        (next_anchor == anchors.len() && next_relation == relations.len()).then_some(out)
    }

    fn fill(
        &self,
        anchors: &[EntityId],
        relations: &[RelationId],
        na: &mut usize,
        nr: &mut usize,
    ) -> Option<QueryExpr> {
        Some(match self {
            QueryExpr::Anchor(_) => {
                let a = *anchors.get(*na)?;
                *na += 1;
                QueryExpr::Anchor(a)
            }
            QueryExpr::Project(c, _) => {
                let inner = c.fill(anchors, relations, na, nr)?;
                let r = *relations.get(*nr)?;
                *nr += 1;
                QueryExpr::Project(Box::new(inner), r)
            }
            QueryExpr::Negate(c) => QueryExpr::Negate(Box::new(c.fill(anchors, relations, na, nr)?)),
            QueryExpr::Intersect(cs) => QueryExpr::Intersect(
                cs.iter().map(|c| c.fill(anchors, relations, na, nr)).collect::<Option<_>>()?,
            ),
            QueryExpr::Union(cs) => QueryExpr::Union(
                cs.iter().map(|c| c.fill(anchors, relations, na, nr)).collect::<Option<_>>()?,
            ),
        })
    }

    /// For each anchor (post-order), whether a negation lies on its path to the root.
    pub fn anchor_negation_flags(&self) -> Vec<bool> {
        fn go(e: &QueryExpr, negated: bool, out: &mut Vec<bool>) {
            match e {
                QueryExpr::Anchor(_) => out.push(negated),
                QueryExpr::Project(c, _) => go(c, negated, out),
                QueryExpr::Negate(c) => go(c, !negated, out),
                QueryExpr::Intersect(cs) | QueryExpr::Union(cs) => {
                    cs.iter().for_each(|c| go(c, negated, out))
                }
            }
        }
        let mut out = Vec::new();
        go(self, false, &mut out);
        out
    }

    /// Largest number of negations on any root-to-leaf path.
    pub fn max_negation_depth(&self) -> usize {
        match self {
            QueryExpr::Anchor(_) => 0,
            QueryExpr::Project(c, _) => c.max_negation_depth(),
            QueryExpr::Negate(c) => 1 + c.max_negation_depth(),
            QueryExpr::Intersect(cs) | QueryExpr::Union(cs) => {
                cs.iter().map(Self::max_negation_depth).max().unwrap_or(0)
            }
        }
    }

    pub fn contains_union(&self) -> bool {
        match self {
            QueryExpr::Anchor(_) => false,
            QueryExpr::Union(_) => true,
            QueryExpr::Project(c, _) | QueryExpr::Negate(c) => c.contains_union(),
            QueryExpr::Intersect(cs) => cs.iter().any(Self::contains_union),
        }
    }
}

/// One operator node of a [`ComputationGraph`]; inputs refer to other nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Anchor(EntityId),
    Projection { input: NodeId, relation: RelationId },
    Intersection(Vec<NodeId>),
    Union(Vec<NodeId>),
    Negation(NodeId),
}

impl Node {
    fn inputs(&self) -> &[NodeId] {
        match self {
            Node::Anchor(_) => &[],
            Node::Projection { input, .. } | Node::Negation(input) => std::slice::from_ref(input),
            Node::Intersection(ids) | Node::Union(ids) => ids,
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node {node} refers to missing node {missing}")]
    Dangling { node: NodeId, missing: NodeId },
    #[error("cycle through node {0}")]
    Cycle(NodeId),
    #[error("node {0} is not reachable from the target")]
    Unreachable(NodeId),
    #[error("{0} operator without inputs")]
    EmptyOperator(&'static str),
    #[error("graph does not match the {0} template")]
    TemplateMismatch(Structure),
    #[error("{0} anchor/relation lists do not fit the template")]
    WrongArity(Structure),
    #[error("more than one negation on a root-to-leaf path")]
    NestedNegation,
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// A query DAG. `order` is a topological order ending at the target.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComputationGraph {
    nodes: Vec<Node>,
    target: NodeId,
    order: Vec<NodeId>,
    structure: Option<Structure>,
}

impl ComputationGraph {
    /// Validates an arbitrary node list: no dangling references, no cycles,
    /// every node reachable from `target`.
    pub fn new(nodes: Vec<Node>, target: NodeId, structure: Option<Structure>) -> Result<Self, GraphError> {
        if target >= nodes.len() {
            return Err(GraphError::Dangling { node: target, missing: target });
        }
        for (id, node) in nodes.iter().enumerate() {
            match node {
                Node::Intersection(v) if v.is_empty() => return Err(GraphError::EmptyOperator("intersection")),
                Node::Union(v) if v.is_empty() => return Err(GraphError::EmptyOperator("union")),
                _ => {}
            }
            if let Some(&missing) = node.inputs().iter().find(|&&i| i >= nodes.len()) {
                return Err(GraphError::Dangling { node: id, missing });
            }
        }
        // iterative DFS post-order with colours: 0 new, 1 on stack, 2 done
        let mut colour = vec![0u8; nodes.len()];
        let mut order = Vec::with_capacity(nodes.len());
        let mut stack = vec![(target, 0usize)];
        colour[target] = 1;
        while let Some((id, next)) = stack.pop() {
            let inputs = nodes[id].inputs();
            if next < inputs.len() {
                stack.push((id, next + 1));
                let child = inputs[next];
                match colour[child] {
                    0 => {
                        colour[child] = 1;
                        stack.push((child, 0));
                    }
                    1 => return Err(GraphError::Cycle(child)),
                    _ => {}
                }
            } else {
                colour[id] = 2;
                order.push(id);
            }
        }
        if let Some(unreached) = colour.iter().position(|&c| c == 0) {
            return Err(GraphError::Unreachable(unreached));
        }
        let graph = Self { nodes, target, order, structure };
        if let Some(s) = structure {
            let expr = graph.to_expr();
            if expr.skeleton() != s.template().skeleton() {
                return Err(GraphError::TemplateMismatch(s));
            }
            if expr.max_negation_depth() > 1 {
                return Err(GraphError::NestedNegation);
            }
        }
        Ok(graph)
    }

    /// Builds a graph from an expression tree. The structure tag is set when
    /// the tree matches one of the templates.
    pub fn from_expr(expr: &QueryExpr) -> Self {
        fn push(e: &QueryExpr, nodes: &mut Vec<Node>) -> NodeId {
            let node = match e {
                QueryExpr::Anchor(a) => Node::Anchor(*a),
                QueryExpr::Project(c, r) => Node::Projection { input: push(c, nodes), relation: *r },
                QueryExpr::Negate(c) => Node::Negation(push(c, nodes)),
                QueryExpr::Intersect(cs) => Node::Intersection(cs.iter().map(|c| push(c, nodes)).collect()),
                QueryExpr::Union(cs) => Node::Union(cs.iter().map(|c| push(c, nodes)).collect()),
            };
            nodes.push(node);
            nodes.len() - 1
        }
        let mut nodes = Vec::new();
        let target = push(expr, &mut nodes);
        let order = (0..nodes.len()).collect();
        let structure = Structure::identify(expr).filter(|_| expr.max_negation_depth() <= 1);
        Self { nodes, target, order, structure }
    }

    pub fn from_template(
        structure: Structure,
        anchors: &[EntityId],
        relations: &[RelationId],
    ) -> Result<Self, GraphError> {
        let expr = structure
            .template()
            .instantiate(anchors, relations)
            .ok_or(GraphError::WrongArity(structure))?;
        let mut g = Self::from_expr(&expr);
        g.structure = Some(structure);
        Ok(g)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn target(&self) -> NodeId {
        self.target
    }

    /// Topological order; every node appears after its inputs.
    pub fn topological_order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn structure(&self) -> Option<Structure> {
        self.structure
    }

    pub fn to_expr(&self) -> QueryExpr {
        self.expr_at(self.target)
    }

    fn expr_at(&self, id: NodeId) -> QueryExpr {
        match &self.nodes[id] {
            Node::Anchor(a) => QueryExpr::Anchor(*a),
            Node::Projection { input, relation } => QueryExpr::Project(Box::new(self.expr_at(*input)), *relation),
            Node::Negation(input) => QueryExpr::Negate(Box::new(self.expr_at(*input))),
            Node::Intersection(ids) => QueryExpr::Intersect(ids.iter().map(|&i| self.expr_at(i)).collect()),
            Node::Union(ids) => QueryExpr::Union(ids.iter().map(|&i| self.expr_at(i)).collect()),
        }
    }

    pub fn anchors(&self) -> Vec<EntityId> {
        self.to_expr().anchors()
    }

    pub fn relations(&self) -> Vec<RelationId> {
        self.to_expr().relations()
    }

    pub fn contains_union(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n, Node::Union(_)))
    }

    /// `(anchors, projections, intersections, unions, negations)`.
    pub fn census(&self) -> (usize, usize, usize, usize, usize) {
        let mut c = (0, 0, 0, 0, 0);
        for n in &self.nodes {
            match n {
                Node::Anchor(_) => c.0 += 1,
                Node::Projection { .. } => c.1 += 1,
                Node::Intersection(_) => c.2 += 1,
                Node::Union(_) => c.3 += 1,
                Node::Negation(_) => c.4 += 1,
            }
        }
        c
    }
}

/// Exact answer set of `graph` on `kg`, evaluated in topological order.
pub fn ground_truth_answers(kg: &KnowledgeGraph, graph: &ComputationGraph) -> Result<EntitySet, GraphError> {
    let mut sets: Vec<Option<EntitySet>> = vec![None; graph.nodes.len()];
    for &id in &graph.order {
        let get = |sets: &Vec<Option<EntitySet>>, i: NodeId| sets[i].clone().expect("topological order");
        let value = match &graph.nodes[id] {
            Node::Anchor(a) => {
                if *a >= kg.entity_count() {
                    return Err(KgError::IdOutOfRange { kind: "entity", id: *a, count: kg.entity_count() }.into());
                }
                EntitySet::from([*a])
            }
            Node::Projection { input, relation } => kg.project_set(&get(&sets, *input), *relation)?,
            Node::Negation(input) => kg.set_complement(&get(&sets, *input)),
            Node::Intersection(ids) => {
                let inputs: Vec<EntitySet> = ids.iter().map(|&i| get(&sets, i)).collect();
                set_intersection(&inputs)
            }
            Node::Union(ids) => {
                let inputs: Vec<EntitySet> = ids.iter().map(|&i| get(&sets, i)).collect();
                set_union(&inputs)
            }
        };
        sets[id] = Some(value);
    }
    Ok(sets[graph.target].take().unwrap_or_default())
}

/// A query with its answers on the train, valid and test graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryInstance {
    pub graph: ComputationGraph,
    pub answers_train: EntitySet,
    pub answers_valid: EntitySet,
    pub answers_test: EntitySet,
}

impl QueryInstance {
    pub fn structure(&self) -> Option<Structure> {
        self.graph.structure()
    }

    pub fn answers(&self, split: crate::kg::Split) -> &EntitySet {
        match split {
            crate::kg::Split::Train => &self.answers_train,
            crate::kg::Split::Valid => &self.answers_valid,
            crate::kg::Split::Test => &self.answers_test,
        }
    }

    /// Answers that need edges first added in `split`: valid minus train for
    /// validation, test minus valid for test. For train this is every train answer.
    pub fn non_trivial_answers(&self, split: crate::kg::Split) -> EntitySet {
        match split {
            crate::kg::Split::Train => self.answers_train.clone(),
            crate::kg::Split::Valid => self.answers_valid.difference(&self.answers_train).copied().collect(),
            crate::kg::Split::Test => self.answers_test.difference(&self.answers_valid).copied().collect(),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::kg::Triple;

    /// Naive evaluator: recursion over the expression tree, scanning the
    /// full triple list for every projection.
    pub(crate) fn naive_answers(kg: &KnowledgeGraph, e: &QueryExpr) -> EntitySet {
        match e {
            QueryExpr::Anchor(a) => [*a].into(),
            QueryExpr::Project(c, r) => {
                let src = naive_answers(kg, c);
                kg.triples()
                    .iter()
                    .filter(|t| t.relation == *r && src.contains(&t.head))
                    .map(|t| t.tail)
                    .collect()
            }
            QueryExpr::Negate(c) => {
                let inner = naive_answers(kg, c);
                (0..kg.entity_count()).filter(|x| !inner.contains(x)).collect()
            }
            QueryExpr::Intersect(cs) => {
                let sets: Vec<EntitySet> = cs.iter().map(|c| naive_answers(kg, c)).collect();
                (0..kg.entity_count()).filter(|x| sets.iter().all(|s| s.contains(x))).collect()
            }
            QueryExpr::Union(cs) => {
                let sets: Vec<EntitySet> = cs.iter().map(|c| naive_answers(kg, c)).collect();
                (0..kg.entity_count()).filter(|x| sets.iter().any(|s| s.contains(x))).collect()
            }
        }
    }

    /// Six entities, relations 0..3.
    pub(crate) fn six_entity_kg() -> KnowledgeGraph {
        let edges = [
            (0, 0, 1),
            (0, 0, 2),
            (1, 1, 3),
            (2, 1, 3),
            (2, 1, 4),
            (5, 2, 3),
            (5, 2, 5),
            (4, 2, 1),
            (3, 0, 0),
        ];
        KnowledgeGraph::new(6, 3, edges.iter().map(|&(h, r, t)| Triple::new(h, r, t))).unwrap()
    }

    #[test]
    fn one_hop_and_intersection() {
        let kg = KnowledgeGraph::new(4, 1, [Triple::new(0, 0, 1), Triple::new(0, 0, 2), Triple::new(3, 0, 3), Triple::new(3, 0, 2)]).unwrap();
        let g = ComputationGraph::from_template(Structure::P1, &[0], &[0]).unwrap();
        assert_eq!(ground_truth_answers(&kg, &g).unwrap(), EntitySet::from([1, 2]));
        // branches {1,2} and {2,3}
        let g = ComputationGraph::from_template(Structure::I2, &[0, 3], &[0, 0]).unwrap();
        assert_eq!(ground_truth_answers(&kg, &g).unwrap(), EntitySet::from([2]));
    }

    #[test]
    fn pni_on_hand_built_graph() {
        let kg = six_entity_kg();
        // pni = (¬ (a0 -r0-> -r1->)) ∩ (a1 -r2->)
        // a0 = 0: 0 -r0-> {1,2} -r1-> {3,4}; complement = {0,1,2,5}
        // a1 = 5: 5 -r2-> {3,5}
        // answer: {5}
        let g = ComputationGraph::from_template(Structure::Pni, &[0, 5], &[0, 1, 2]).unwrap();
        assert_eq!(ground_truth_answers(&kg, &g).unwrap(), EntitySet::from([5]));
        assert_eq!(naive_answers(&kg, &g.to_expr()), EntitySet::from([5]));
    }

    #[test]
    fn validation_catches_malformed_graphs() {
        let dangling = vec![Node::Anchor(0), Node::Projection { input: 7, relation: 0 }];
        assert!(matches!(ComputationGraph::new(dangling, 1, None), Err(GraphError::Dangling { .. })));

        let cycle = vec![
            Node::Projection { input: 1, relation: 0 },
            Node::Projection { input: 0, relation: 0 },
        ];
        assert!(matches!(ComputationGraph::new(cycle, 1, None), Err(GraphError::Cycle(_))));

        let unreachable = vec![Node::Anchor(0), Node::Anchor(1), Node::Projection { input: 0, relation: 0 }];
        assert!(matches!(ComputationGraph::new(unreachable, 2, None), Err(GraphError::Unreachable(1))));

        let wrong = vec![Node::Anchor(0), Node::Projection { input: 0, relation: 0 }];
        assert!(matches!(
            ComputationGraph::new(wrong.clone(), 1, Some(Structure::P2)),
            Err(GraphError::TemplateMismatch(Structure::P2))
        ));
        assert!(ComputationGraph::new(wrong, 1, Some(Structure::P1)).is_ok());

        assert!(matches!(
            ComputationGraph::from_template(Structure::I2, &[0], &[0, 0]),
            Err(GraphError::WrongArity(_))
        ));
    }

    #[test]
    fn out_of_order_node_lists_evaluate() {
        // target first, anchor last
        let nodes = vec![Node::Projection { input: 1, relation: 0 }, Node::Anchor(0)];
        let g = ComputationGraph::new(nodes, 0, Some(Structure::P1)).unwrap();
        let kg = six_entity_kg();
        assert_eq!(ground_truth_answers(&kg, &g).unwrap(), EntitySet::from([1, 2]));
    }

    #[test]
    fn instance_tiers() {
        let g = ComputationGraph::from_template(Structure::P1, &[0], &[0]).unwrap();
        let q = QueryInstance {
            graph: g,
            answers_train: [1].into(),
            answers_valid: [1, 2].into(),
            answers_test: [1, 2, 3].into(),
        };
        assert_eq!(q.non_trivial_answers(crate::kg::Split::Test), EntitySet::from([3]));
        assert_eq!(q.non_trivial_answers(crate::kg::Split::Valid), EntitySet::from([2]));
    }
}
