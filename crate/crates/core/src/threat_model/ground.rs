//! Semi-naive forward chaining and goal-directed slicing.

use super::{AttackGraph, AttackModel, Fact, Node, NodeId, NodeKind, Predicate, Term};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundError {
    #[error("goal {0} is not derivable from the given facts")]
    NotDerivable(String),
    #[error("fact {0} is not ground")]
    NonGroundFact(String),
    #[error("goal {0} is not ground")]
    NonGroundGoal(String),
    #[error("goal {0} is not an instance of a derived predicate")]
    GoalNotDerived(String),
    #[error("fact {0} instantiates a derived predicate")]
    FactNotPrimitive(String),
}

type Args = Vec<String>;

struct Derivation {
    rule: usize,
    body: Vec<usize>,
    head: usize,
}

#[derive(Default)]
struct Db {
    atoms: Vec<(String, Args)>,
    round: Vec<usize>,
    index: HashMap<(String, Args), usize>,
    by_pred: HashMap<String, Vec<usize>>,
}

impl Db {
    fn insert(&mut self, name: &str, args: Args, round: usize) -> usize {
        let key = (name.to_string(), args);
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.atoms.len();
        self.atoms.push(key.clone());
        self.round.push(round);
        self.by_pred.entry(key.0.clone()).or_default().push(id);
        self.index.insert(key, id);
        id
    }
}

fn const_args(p: &Predicate) -> Option<Args> {
    p.args
        .iter()
        .map(|t| match t {
            Term::Const(c) => Some(c.clone()),
            Term::Var(_) => None,
        })
        .collect()
}

fn unify(pattern: &Predicate, args: &Args, binding: &mut Vec<(String, String)>) -> bool {
    let mark = binding.len();
    for (t, a) in pattern.args.iter().zip(args) {
        let ok = match t {
            Term::Const(c) => c == a,
            Term::Var(v) if v == "_" => true,
            Term::Var(v) => match binding.iter().find(|(k, _)| k == v) {
                Some((_, bound)) => bound == a,
                None => {
                    binding.push((v.clone(), a.clone()));
                    true
                }
            },
        };
        if !ok {
            binding.truncate(mark);
            return false;
        }
    }
    true
}

fn instantiate(p: &Predicate, binding: &[(String, String)]) -> Args {
    p.args
        .iter()
        .map(|t| match t {
            Term::Const(c) => c.clone(),
            Term::Var(v) => binding
                .iter()
                .find(|(k, _)| k == v)
                .map(|(_, a)| a.clone())
                .expect("safe rule binds every head variable"),
        })
        .collect()
}

struct Join<'a> {
    db: &'a Db,
    body: &'a [Predicate],
    delta_pos: usize,
    delta_round: usize,
}

impl Join<'_> {
    fn admits(&self, pos: usize, atom: usize) -> bool {
        let r = self.db.round[atom];
        match pos.cmp(&self.delta_pos) {
            std::cmp::Ordering::Less => r < self.delta_round,
            std::cmp::Ordering::Equal => r == self.delta_round,
            std::cmp::Ordering::Greater => r <= self.delta_round,
        }
    }

    fn run(
        &self,
        pos: usize,
        binding: &mut Vec<(String, String)>,
        chosen: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, Vec<(String, String)>)>,
    ) {
        if pos == self.body.len() {
            out.push((chosen.clone(), binding.clone()));
            return;
        }
        let pat = &self.body[pos];
        let Some(cands) = self.db.by_pred.get(&pat.name) else {
            return;
        };
        for &atom in cands {
            if !self.admits(pos, atom) {
                continue;
            }
            let mark = binding.len();
            if unify(pat, &self.db.atoms[atom].1, binding) {
                chosen.push(atom);
                self.run(pos + 1, binding, chosen, out);
                chosen.pop();
                binding.truncate(mark);
            }
        }
    }
}

/// Grounds a model against facts and slices the result to derivations of `goal`.
///
/// Node ids are assigned in depth-first preorder from the goal (id 1): each
/// derivation's rule node is numbered before its body atoms, alternative
/// derivations of one atom follow the textual order of their rules, and an
/// atom reached twice keeps its first id.
pub fn ground(
    model: &AttackModel,
    facts: &[Fact],
    goal: &Predicate,
) -> Result<AttackGraph, GroundError> {
    let goal_args = const_args(goal).ok_or_else(|| GroundError::NonGroundGoal(goal.to_string()))?;
    if !model.is_derived(&goal.name) {
        return Err(GroundError::GoalNotDerived(goal.to_string()));
    }

    let mut db = Db::default();
    let mut fact_scores: HashMap<usize, f64> = HashMap::new();
    for f in facts {
        let args =
            const_args(&f.atom).ok_or_else(|| GroundError::NonGroundFact(f.atom.to_string()))?;
        if model.is_derived(&f.atom.name) {
            return Err(GroundError::FactNotPrimitive(f.atom.to_string()));
        }
        let id = db.insert(&f.atom.name, args, 0);
        if let Some(s) = f.score {
            fact_scores.insert(id, s);
        }
    }

    let mut derivations: Vec<Derivation> = Vec::new();
    let mut seen: HashSet<(usize, Vec<usize>)> = HashSet::new();
    let mut delta_round = 0;
    loop {
        let frontier = db.atoms.len();
        let mut fresh = Vec::new();
        for (ri, rule) in model.rules.iter().enumerate() {
            for delta_pos in 0..rule.body.len() {
                let join = Join {
                    db: &db,
                    body: &rule.body,
                    delta_pos,
                    delta_round,
                };
                let mut out = Vec::new();
                join.run(0, &mut Vec::new(), &mut Vec::new(), &mut out);
                for (body, binding) in out {
                    if seen.insert((ri, body.clone())) {
                        fresh.push((ri, body, instantiate(&rule.head, &binding)));
                    }
                }
            }
        }
        for (rule, body, head_args) in fresh {
            let head = db.insert(&model.rules[rule].head.name, head_args, delta_round + 1);
            derivations.push(Derivation { rule, body, head });
        }
        if db.atoms.len() == frontier {
            break;
        }
        delta_round += 1;
    }

    let goal_atom = db
        .index
        .get(&(goal.name.clone(), goal_args))
        .copied()
        .ok_or_else(|| GroundError::NotDerivable(goal.to_string()))?;

    let mut producers: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, d) in derivations.iter().enumerate() {
        producers.entry(d.head).or_default().push(i);
    }
    for list in producers.values_mut() {
        list.sort_by(|&a, &b| {
            let (da, db_) = (&derivations[a], &derivations[b]);
            (da.rule, &da.body).cmp(&(db_.rule, &db_.body))
        });
    }

    let mut slicer = Slicer {
        model,
        db: &db,
        derivations: &derivations,
        producers: &producers,
        fact_scores: &fact_scores,
        atom_ids: HashMap::new(),
        nodes: BTreeMap::new(),
        edges: BTreeSet::new(),
        next: 1,
    };
    let goal_id = slicer.visit(goal_atom);
    Ok(AttackGraph {
        nodes: slicer.nodes,
        edges: slicer.edges,
        goal: goal_id,
    })
}

struct Slicer<'a> {
    model: &'a AttackModel,
    db: &'a Db,
    derivations: &'a [Derivation],
    producers: &'a HashMap<usize, Vec<usize>>,
    fact_scores: &'a HashMap<usize, f64>,
    atom_ids: HashMap<usize, NodeId>,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeSet<(NodeId, NodeId)>,
    next: NodeId,
}

impl Slicer<'_> {
    fn fresh(&mut self) -> NodeId {
        let id = self.next;
        self.next += 1;
        id
    }

    fn visit(&mut self, atom: usize) -> NodeId {
        if let Some(&id) = self.atom_ids.get(&atom) {
            return id;
        }
        let id = self.fresh();
        self.atom_ids.insert(atom, id);
        let (name, args) = &self.db.atoms[atom];
        let derived = self.model.is_derived(name);
        let label = Predicate {
            name: name.clone(),
            args: args.iter().map(|a| Term::Const(a.clone())).collect(),
        }
        .to_string();
        self.nodes.insert(
            id,
            Node {
                id,
                kind: if derived {
                    NodeKind::Derived
                } else {
                    NodeKind::Condition
                },
                label,
                score: self.fact_scores.get(&atom).copied(),
                cost: None,
                damage: None,
            },
        );
        let producers = self.producers.get(&atom).cloned().unwrap_or_default();
        for d in producers {
            let deriv = &self.derivations[d];
            let rule = &self.model.rules[deriv.rule];
            let rid = self.fresh();
            self.nodes.insert(
                rid,
                Node {
                    id: rid,
                    kind: NodeKind::Rule,
                    label: rule.id.clone(),
                    score: Some(rule.base_score),
                    cost: Some(rule.attack_cost),
                    damage: Some(rule.damage),
                },
            );
            self.edges.insert((rid, id));
            for &b in &deriv.body {
                let bid = self.visit(b);
                self.edges.insert((bid, rid));
            }
        }
        id
    }
}

impl AttackModel {
    /// Grounds against the model's own facts.
    pub fn ground(&self, goal: &Predicate) -> Result<AttackGraph, GroundError> {
        ground(self, &self.facts, goal)
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_attack_model;
    use super::*;

    #[test]
    fn single_rule_fixpoint() {
        let m = parse_attack_model(
            "illegalAccessToFile(fs,write,ex) :- execCode(ex,u), localFileProtection(h,u,write,fs), \
hasAccount(u,h), fileOnHost(fs,h), canAccessFile(h,u,write,fs).
execCode(Ex, U).
localFileProtection(H, U, Write, Fs).
hasAccount(U, H).
fileOnHost(Fs, H).
canAccessFile(H, U, Write, Fs).
",
        )
        .unwrap();
        let g = m
            .ground(&Predicate::ground("illegalAccessToFile", &["Fs", "Write", "Ex"]))
            .unwrap();
        assert_eq!(g.nodes_of(NodeKind::Condition).len(), 5);
        assert_eq!(g.rule_nodes().len(), 1);
        assert_eq!(g.nodes_of(NodeKind::Derived).len(), 1);
        assert_eq!(g.edges.len(), 6);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn empty_facts_not_derivable() {
        let m = parse_attack_model("p(x) :- q(x).").unwrap();
        assert_eq!(
            ground(&m, &[], &Predicate::ground("p", &["A"])),
            Err(GroundError::NotDerivable("p(A)".into()))
        );
    }

    #[test]
    fn alternative_rules_share_head() {
        let m = parse_attack_model("p(x) :- q(x).\np(x) :- s(x).\nq(A).\ns(A).\n").unwrap();
        let g = m.ground(&Predicate::ground("p", &["A"])).unwrap();
        assert_eq!(g.pred(g.goal).len(), 2);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn multi_step_chain_and_slice() {
        let m = parse_attack_model(
            "reach(h) :- start(h).\nreach(h) :- reach(s), link(s,h).\nstart(A).\nlink(A,B).\nlink(B,C).\nlink(C,D).\n",
        )
        .unwrap();
        let g = m.ground(&Predicate::ground("reach", &["C"])).unwrap();
        // reach(D) is derivable but not on any derivation of reach(C)
        assert!(!g.nodes.values().any(|n| n.label == "reach(D)"));
        assert_eq!(g.rule_nodes().len(), 3);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn recursive_rules_terminate_with_cycles_in_graph() {
        let m = parse_attack_model(
            "reach(h) :- start(h).\nreach(h) :- reach(s), link(s,h).\nstart(A).\nlink(A,B).\nlink(B,A).\n",
        )
        .unwrap();
        let g = m.ground(&Predicate::ground("reach", &["A"])).unwrap();
        assert!(g.has_cycle());
    }
}
