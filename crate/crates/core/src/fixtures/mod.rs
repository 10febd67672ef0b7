//! Reference models used by tests, examples and the CLI.
//!
//! `plycent` is the seven-host-step attack graph on the plycent hosts: a DoS
//! on plycent03 reached either directly over http or by pivoting through a
//! root shell on plycent02.
//!
//! `network` is the four-host desk network: a web server on plycent01, an
//! internal proxy host plyrhel01, plycent03 reachable over ssh, and the
//! PostgreSQL server plycent02 whose denial of service is the goal. Rule
//! scores are CVSS exploitability scores divided by 4 (0.8 for steps that
//! exploit no vulnerability) and damages are CVSS impact scores.

use crate::game::Scheduler;
use crate::smdp::{attacker_rewards, DefenseSpec, RewardStructure};
use crate::threat_model::{parse_attack_model, AttackGraph, Predicate};
use std::collections::BTreeSet;

/// Rule order fixes the node numbering: the pivot rule precedes the direct
/// access rule, so the graph reads 1 (goal) .. 15 in depth-first order.
pub const PLYCENT_MODEL: &str = r#"% DoS on plycent03
misuseAction('overusecpu').
hacl('plycent02','plycent03','tcp','22').
vulExists('plycent02','vul-2018-7566').
attackerLocated('plycent02').
hacl('internet','plycent03','http','80').
attackerLocated('internet').
networkServiceInfo('plycent03','','centos7.5').
vulExists('plycent03','cve-2018-5390-cen').

systemDown(h) :- misuseAction(m), netAccess(h,'tcp',p), networkServiceInfo(h,u,os), vulExists(h,v). [id=remote_DOS, score=0.74, cost=4]
netAccess(h,'tcp','22') :- hacl(s,h,'tcp','22'), exeCode(s,'root'). [id=multi_hop, score=0.8, cost=2]
exeCode(h,'root') :- vulExists(h,v), attackerLocated(h). [id=memory_tamper, score=0.55, cost=3]
netAccess(h,'tcp','22') :- hacl(s,h,'http',q), attackerLocated(s). [id=direct_access, score=0.92, cost=1]
"#;

pub fn plycent_goal() -> Predicate {
    Predicate::ground("systemDown", &["plycent03"])
}

pub fn plycent_graph() -> AttackGraph {
    parse_attack_model(PLYCENT_MODEL)
        .expect("fixture parses")
        .ground(&plycent_goal())
        .expect("fixture grounds")
}

/// The reactive patch of the memory-tampering vulnerability.
pub const PLYCENT_DEFENSE: &str = r#"[
  {"name": "patch_vul_2018_7566",
   "guard": "exeCode_plycent02_root & vulExists_plycent02_vul_2018_7566",
   "updates": [
     {"assign": {"exeCode_plycent02_root": false, "vulExists_plycent02_vul_2018_7566": false}, "prob": 0.85},
     {"assign": {}, "prob": 0.15}],
   "cost": 50}
]"#;

pub fn plycent_defense() -> DefenseSpec {
    DefenseSpec::from_json(PLYCENT_DEFENSE).expect("fixture defense parses")
}

pub const NETWORK_MODEL: &str = r#"% Four-host desk network: DoS on the plycent02 database server
attackerLocated('internet').
hacl('internet','plycent01','http','80').
hacl('plycent01','plyrhel01','http','80').
hacl('plycent01','plyrhel01','http','8080').
hacl('plyrhel01','plycent03','ssh','22').
hacl('plyrhel01','plycent03','http','80').
hacl('plycent03','plycent02','tcp','5432').
networkServiceInfo('plycent01','httpd','http','80').
networkServiceInfo('plyrhel01','curl','http','80').
networkServiceInfo('plyrhel01','httpproxy','http','8080').
networkServiceInfo('plycent03','sshd','ssh','22').
networkServiceInfo('plycent03','httpd','http','80').
vulExists('plycent01','cve-2018-1273','httpd','remoteExploit','codeExec').
vulExists('plycent01','cve-2017-13215','kernel','localExploit','privEscalation').
vulExists('plyrhel01','cve-2018-1000120','curl','remoteExploit','codeExec').
vulExists('plyrhel01','cve-2018-1273','httpproxy','remoteExploit','codeExec').
vulExists('plycent03','cve-2018-7566','sshd','remoteExploit','authBypass').
vulExists('plycent03','cve-2018-1273','httpd','remoteExploit','codeExec').
improperAuth('plycent02','postgres').

netAccess(h,p,n) :- attackerLocated(z), hacl(z,h,p,n). [id=direct_access, score=0.8, cost=1]
netAccess(h,p,n) :- execCode(s,u), hacl(s,h,p,n). [id=multi_hop, score=0.8, cost=2]
execCode(h,'user') :- netAccess(h,p,n), networkServiceInfo(h,sv,p,n), vulExists(h,v,sv,'remoteExploit','codeExec'). [id=remote_code_exec, score=0.975, cost=3, damage=5.9]
execCode(h,'root') :- execCode(h,'user'), vulExists(h,v,sv,'localExploit','privEscalation'). [id=local_priv_escalation, score=0.45, cost=4, damage=5.9]
execCode(h,'root') :- netAccess(h,'ssh',n), networkServiceInfo(h,sv,'ssh',n), vulExists(h,v,sv,'remoteExploit','authBypass'). [id=memory_tamper, score=0.45, cost=4, damage=5.9]
dataTampered(h) :- netAccess(h,p,n), improperAuth(h,sv). [id=malicious_query, score=0.8, cost=2, damage=4]
dos(h) :- dataTampered(h). [id=delete_records, score=0.8, cost=1, damage=8]
dos(h) :- netAccess(h,p,n), improperAuth(h,sv), execCode(s,'root'), hacl(s,h,p,n). [id=query_flood, score=0.8, cost=2, damage=8]
"#;

pub fn network_goal() -> Predicate {
    Predicate::ground("dos", &["plycent02"])
}

/// 50 nodes, 18 of them attack steps.
pub fn network_graph() -> AttackGraph {
    parse_attack_model(NETWORK_MODEL)
        .expect("fixture parses")
        .ground(&network_goal())
        .expect("fixture grounds")
}

/// The network graph in MulVAL's CSV interchange format.
pub const NETWORK_VERTICES: &str = include_str!("../../fixtures/network/VERTICES.CSV");
pub const NETWORK_ARCS: &str = include_str!("../../fixtures/network/ARCS.CSV");

/// Patches, firewall blocks and a service reconfiguration, each triggered by
/// the capability it responds to. `skip` is free, so a defender handed the
/// turn more often is never worse off.
pub const NETWORK_DEFENSE: &str = r#"[
  {"name": "patch_cve_2018_1273_plycent01",
   "guard": "execCode_plycent01_user & vulExists_plycent01_cve_2018_1273_httpd_remoteExploit_codeExec",
   "updates": [
     {"assign": {"vulExists_plycent01_cve_2018_1273_httpd_remoteExploit_codeExec": false, "execCode_plycent01_user": false}, "prob": 0.9},
     {"assign": {}, "prob": 0.1}],
   "cost": 20},
  {"name": "patch_cve_2017_13215_plycent01",
   "guard": "execCode_plycent01_user & vulExists_plycent01_cve_2017_13215_kernel_localExploit_privEscalation",
   "updates": [
     {"assign": {"vulExists_plycent01_cve_2017_13215_kernel_localExploit_privEscalation": false}, "prob": 0.9},
     {"assign": {}, "prob": 0.1}],
   "cost": 30},
  {"name": "block_http_plycent01_plyrhel01",
   "guard": "netAccess_plyrhel01_http_80 & hacl_plycent01_plyrhel01_http_80",
   "updates": [
     {"assign": {"hacl_plycent01_plyrhel01_http_80": false, "netAccess_plyrhel01_http_80": false}, "prob": 1.0}],
   "cost": 150},
  {"name": "patch_cve_2018_1000120_plyrhel01",
   "guard": "execCode_plyrhel01_user & vulExists_plyrhel01_cve_2018_1000120_curl_remoteExploit_codeExec",
   "updates": [
     {"assign": {"vulExists_plyrhel01_cve_2018_1000120_curl_remoteExploit_codeExec": false, "execCode_plyrhel01_user": false}, "prob": 0.85},
     {"assign": {}, "prob": 0.15}],
   "cost": 40},
  {"name": "block_ssh_plyrhel01_plycent03",
   "guard": "netAccess_plycent03_ssh_22 & hacl_plyrhel01_plycent03_ssh_22",
   "updates": [
     {"assign": {"hacl_plyrhel01_plycent03_ssh_22": false, "netAccess_plycent03_ssh_22": false}, "prob": 1.0}],
   "cost": 80},
  {"name": "patch_cve_2018_7566_plycent03",
   "guard": "netAccess_plycent03_ssh_22 & vulExists_plycent03_cve_2018_7566_sshd_remoteExploit_authBypass",
   "updates": [
     {"assign": {"vulExists_plycent03_cve_2018_7566_sshd_remoteExploit_authBypass": false}, "prob": 0.85},
     {"assign": {}, "prob": 0.15}],
   "cost": 50},
  {"name": "fix_auth_plycent02",
   "guard": "netAccess_plycent02_tcp_5432 & improperAuth_plycent02_postgres",
   "updates": [
     {"assign": {"improperAuth_plycent02_postgres": false}, "prob": 0.95},
     {"assign": {}, "prob": 0.05}],
   "cost": 300},
  {"name": "skip", "guard": "true", "updates": [{"assign": {}, "prob": 1.0}], "cost": 0}
]"#;

pub fn network_defense() -> DefenseSpec {
    DefenseSpec::from_json(NETWORK_DEFENSE).expect("fixture defense parses")
}

/// `aCosts` (attack effort) and `dCosts` (defense costs plus ten times the
/// impact score of every attempted step).
pub fn network_rewards(graph: &AttackGraph, defense: &DefenseSpec) -> Vec<RewardStructure> {
    let damage = attacker_rewards(graph, "damage", true).scaled(10.0);
    vec![
        attacker_rewards(graph, "aCosts", false),
        defense.costs("defense").plus(&damage, "dCosts"),
    ]
}

/// Trigger-set schedulers reacting to 2, 4 and 6 attack-step types.
pub fn network_schedulers() -> [Scheduler; 3] {
    let types = [
        "memory_tamper",
        "malicious_query",
        "remote_code_exec",
        "multi_hop",
        "local_priv_escalation",
        "query_flood",
    ];
    [2, 4, 6].map(|k| Scheduler::TriggerSet(types[..k].iter().map(|t| t.to_string()).collect::<BTreeSet<_>>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threat_model::{validate_graph, NodeKind};

    #[test]
    fn plycent_numbering() {
        let g = plycent_graph();
        assert!(validate_graph(&g).is_empty());
        assert_eq!(g.nodes.len(), 15);
        let label = |id: u32| g.nodes[&id].label.clone();
        assert_eq!(label(1), "systemDown(plycent03)");
        assert_eq!(label(2), "remote_DOS");
        assert_eq!(g.pred(2), vec![3, 4, 14, 15]);
        assert_eq!(g.pred(4), vec![5, 11]);
        assert_eq!(g.pred(5), vec![6, 7]);
        assert_eq!(g.pred(8), vec![9, 10]);
        assert_eq!(g.pred(11), vec![12, 13]);
        assert_eq!(g.rule_nodes(), vec![2, 5, 8, 11]);
        assert_eq!(g.nodes_of(NodeKind::Derived), vec![1, 4, 7]);
        assert_eq!(g.nodes[&11].score, Some(0.92));
    }

    #[test]
    fn network_shape() {
        let g = network_graph();
        assert!(validate_graph(&g).is_empty());
        assert_eq!(g.nodes.len(), 50);
        assert_eq!(g.rule_nodes().len(), 18);
        assert_eq!(g.nodes[&g.goal].label, "dos(plycent02)");
        let types: BTreeSet<String> = g.rule_nodes().iter().filter_map(|&r| g.action_type(r)).collect();
        assert_eq!(types.len(), 8);
        for s in network_schedulers() {
            let Scheduler::TriggerSet(t) = s else { unreachable!() };
            assert!(t.is_subset(&types));
        }
    }

    #[test]
    fn network_csv_matches_grounding() {
        let g = network_graph();
        let imported = crate::threat_model::import_mulval(NETWORK_VERTICES, NETWORK_ARCS).unwrap();
        assert_eq!(imported.edges, g.edges);
        assert_eq!(imported.goal, g.goal);
        for (id, n) in &g.nodes {
            let m = &imported.nodes[id];
            assert_eq!((m.kind, &m.label), (n.kind, &n.label));
        }
        assert_eq!(crate::threat_model::export_mulval(&imported), (NETWORK_VERTICES.to_string(), NETWORK_ARCS.to_string()));
    }

    #[test]
    fn network_defense_reads_attacker_vars() {
        let g = network_graph();
        let d = network_defense();
        let a = crate::smdp::attacker_smdp(&g, &Default::default()).unwrap();
        let t = d.referenced_attacker_vars(&a).unwrap();
        assert!(t.contains("execCode_plycent01_user"));
        assert!(t.contains("improperAuth_plycent02_postgres"));
        let rw = network_rewards(&g, &d);
        assert_eq!(rw[1].get("skip"), 0.0);
        assert_eq!(rw[1].get("fix_auth_plycent02"), 300.0);
        assert!((rw[1].get("memory_tamper") - 59.0).abs() < 1e-12);
    }
}
