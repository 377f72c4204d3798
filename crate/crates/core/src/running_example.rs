//! The package delivery example: packages (`p`) are created, ordered for home
//! or depot delivery, delivered by deliverers (`d`) and collected at
//! warehouses (`w`), together with the recorded logs of four delivery days.

use crate::log::{Event, SystemLog};
use crate::objects::{ObjectMultiset, ObjectUniverse, Role, RoleKind};
use crate::pnid::{Arc, ExecutionPoset, Label, Marking, Mode, Place, ProcessModel, Tpnid, Transition, TransitionFiring, Variable};

fn arc(place: &str, vars: &[&str]) -> Arc {
    Arc { place: place.into(), vars: vec![vars.iter().map(|v| v.to_string()).collect()] }
}

fn transition(id: &str, label: Option<&str>, inputs: Vec<Arc>, outputs: Vec<Arc>) -> Transition {
    Transition {
        id: id.into(),
        label: label.map_or(Label::Silent, |l| Label::Activity(l.into())),
        inputs,
        outputs,
        projection: None,
    }
}

pub fn universe() -> ObjectUniverse {
    let mut u = ObjectUniverse::new([
        Role::new("p", RoleKind::Spontaneous),
        Role::new("d", RoleKind::Expected),
        Role::new("w", RoleKind::Persistent),
    ])
    .expect("distinct roles");
    for k in 1..=10 {
        u.add_object(&format!("p{k}"), "p", 1).unwrap();
    }
    u.add_object("d1", "d", 1).unwrap();
    u.add_object("d2", "d", 1).unwrap();
    u.add_object("w1", "w", 2).unwrap();
    u.add_object("w2", "w", 1).unwrap();
    u
}

/// The delivery net: `p1..p4, p9, p10` hold packages, `p11`/`p12` hold
/// active/idle deliverers, `p8` holds free warehouse spots, and `p5`, `p6`,
/// `p7` correlate packages with deliverers or warehouses.
pub fn net() -> Tpnid {
    let mut net = Tpnid::default();
    for (name, role, fresh) in [("p", "p", false), ("nu_p", "p", true), ("d", "d", false), ("w", "w", false)] {
        net.variables.insert(name.into(), Variable { name: name.into(), role: role.into(), fresh });
    }
    let places: [(&str, &[&str]); 12] = [
        ("p1", &["p"]),
        ("p2", &["p"]),
        ("p3", &["p"]),
        ("p4", &["p"]),
        ("p5", &["p", "d"]),
        ("p6", &["p", "d"]),
        ("p7", &["p", "w"]),
        ("p8", &["w"]),
        ("p9", &["p"]),
        ("p10", &["p"]),
        ("p11", &["d"]),
        ("p12", &["d"]),
    ];
    for (id, alpha) in places {
        net.places.insert(
            id.into(),
            Place { id: id.into(), alpha: alpha.iter().map(|r| r.to_string()).collect(), projection: None },
        );
    }
    let ts = [
        transition("create", Some("create"), vec![], vec![arc("p1", &["nu_p"])]),
        transition("order_home", Some("order_home"), vec![arc("p1", &["p"])], vec![arc("p2", &["p"])]),
        transition("order_depot", Some("order_depot"), vec![arc("p1", &["p"])], vec![arc("p3", &["p"]), arc("p4", &["p"])]),
        transition("ring", Some("ring"), vec![arc("p2", &["p"]), arc("p11", &["d"])], vec![arc("p5", &["p", "d"])]),
        transition(
            "deliver_home",
            Some("deliver_home"),
            vec![arc("p5", &["p", "d"])],
            vec![arc("p10", &["p"]), arc("p11", &["d"])],
        ),
        transition("tau2", None, vec![arc("p5", &["p", "d"])], vec![arc("p6", &["p", "d"]), arc("p4", &["p"])]),
        transition("tau1", None, vec![arc("p3", &["p"]), arc("p11", &["d"])], vec![arc("p6", &["p", "d"])]),
        transition(
            "register_depot",
            Some("register_depot"),
            vec![arc("p4", &["p"]), arc("p8", &["w"])],
            vec![arc("p7", &["p", "w"])],
        ),
        transition(
            "deliver_depot",
            Some("deliver_depot"),
            vec![arc("p6", &["p", "d"]), arc("p7", &["p", "w"])],
            vec![arc("p7", &["p", "w"]), arc("p9", &["p"]), arc("p11", &["d"])],
        ),
        transition(
            "collect",
            Some("collect"),
            vec![arc("p7", &["p", "w"]), arc("p9", &["p"])],
            vec![arc("p8", &["w"]), arc("p10", &["p"])],
        ),
        transition("destroy", Some("destroy"), vec![arc("p10", &["p"])], vec![]),
        transition("t_start", Some("t_start"), vec![arc("p12", &["d"])], vec![arc("p11", &["d"])]),
        transition("t_stop", Some("t_stop"), vec![arc("p11", &["d"])], vec![arc("p12", &["d"])]),
    ];
    for t in ts {
        net.transitions.insert(t.id.clone(), t);
    }
    net
}

fn resting_marking() -> Marking {
    let mut m = Marking::new();
    m.add("p12", vec!["d1".into()], 1);
    m.add("p12", vec!["d2".into()], 1);
    m.add("p8", vec!["w1".into()], 2);
    m.add("p8", vec!["w2".into()], 1);
    m
}

pub fn model() -> ProcessModel {
    ProcessModel { net: net(), initial: resting_marking(), final_marking: resting_marking(), universe: universe() }
}

fn f(id: &str, t: &str, binding: &[(&str, &str)]) -> TransitionFiring {
    TransitionFiring::new(id, t, binding.iter().copied().collect::<Mode>())
}

/// The modeled execution of the first day: `p1` is rung at home and then
/// brought to the depot, `p2` goes straight to the depot.
pub fn run_one() -> ExecutionPoset {
    let seq = vec![
        f("t_start#1", "t_start", &[("d", "d1")]),
        f("create#1", "create", &[("nu_p", "p1")]),
        f("order_home#1", "order_home", &[("p", "p1")]),
        f("ring#1", "ring", &[("p", "p1"), ("d", "d1")]),
        f("create#2", "create", &[("nu_p", "p2")]),
        f("order_depot#1", "order_depot", &[("p", "p2")]),
        f("tau2#1", "tau2", &[("p", "p1"), ("d", "d1")]),
        f("register_depot#1", "register_depot", &[("p", "p1"), ("w", "w1")]),
        f("register_depot#2", "register_depot", &[("p", "p2"), ("w", "w1")]),
        f("deliver_depot#1", "deliver_depot", &[("p", "p1"), ("d", "d1"), ("w", "w1")]),
        f("tau1#1", "tau1", &[("p", "p2"), ("d", "d1")]),
        f("deliver_depot#2", "deliver_depot", &[("p", "p2"), ("d", "d1"), ("w", "w1")]),
        f("collect#1", "collect", &[("p", "p1"), ("w", "w1")]),
        f("destroy#1", "destroy", &[("p", "p1")]),
        f("collect#2", "collect", &[("p", "p2"), ("w", "w1")]),
        f("destroy#2", "destroy", &[("p", "p2")]),
        f("t_stop#1", "t_stop", &[("d", "d1")]),
    ];
    model().causal_run(seq).expect("run of the delivery net")
}

/// Who records which activity.
pub fn recorder_of(activity: &str) -> &'static str {
    match activity {
        "ring" | "deliver_home" | "deliver_depot" | "t_start" | "t_stop" => "deliverer",
        "collect" => "warehouse",
        _ => "central",
    }
}

/// A log from a timeline of `(activity, objects)`. Events get increasing
/// timestamps and are totally ordered by them.
pub fn log_from_timeline(id_prefix: &str, timeline: &[(&str, &[&str])]) -> SystemLog {
    let events = timeline
        .iter()
        .enumerate()
        .map(|(k, (activity, objs))| {
            let mut e = Event::new(format!("{id_prefix}{:02}", k + 1), *activity, objs.iter().copied().collect::<ObjectMultiset>());
            e.timestamp = Some(k as f64);
            e.recorder = Some(recorder_of(activity).to_string());
            e
        })
        .collect();
    SystemLog::from_timestamps(events, 0.0, universe()).expect("timestamps are distinct")
}

const DAY_ONE: [(&str, &[&str]); 16] = [
    ("t_start", &["d1"]),
    ("create", &["p1"]),
    ("order_home", &["p1"]),
    ("ring", &["p1", "d1"]),
    ("create", &["p2"]),
    ("order_depot", &["p2"]),
    ("register_depot", &["p1", "w1"]),
    ("register_depot", &["p2", "w1"]),
    ("deliver_depot", &["p1", "d1", "w1"]),
    ("ring", &["p2", "d1"]),
    ("deliver_depot", &["p2", "d1", "w1"]),
    ("collect", &["p1", "w1"]),
    ("destroy", &["p1"]),
    ("collect", &["p2", "w1"]),
    ("destroy", &["p2"]),
    ("t_stop", &["d1"]),
];

/// What happened on day one, as a log: `d1` rang at `p1`'s home, then at
/// `p2`'s although `p2` was ordered for depot delivery.
pub fn system_one() -> SystemLog {
    log_from_timeline("s", &DAY_ONE)
}

/// Day one as recorded: the ring at `p1`'s home is missing.
pub fn log_one() -> SystemLog {
    let timeline: Vec<(&str, &[&str])> = DAY_ONE.iter().enumerate().filter(|(k, _)| *k != 3).map(|(_, x)| *x).collect();
    log_from_timeline("e", &timeline)
}

/// Day two: a ring for `p3` was recorded while `d1` was busy with `p5`, and
/// the ring for the home-ordered `p4` never happened.
pub fn log_two() -> SystemLog {
    log_from_timeline(
        "e",
        &[
            ("t_start", &["d1"]),
            ("create", &["p3"]),
            ("order_depot", &["p3"]),
            ("create", &["p5"]),
            ("order_home", &["p5"]),
            ("ring", &["p5", "d1"]),
            ("create", &["p4"]),
            ("order_home", &["p4"]),
            ("ring", &["p3", "d1"]),
            ("register_depot", &["p3", "w1"]),
            ("register_depot", &["p4", "w1"]),
            ("deliver_home", &["p5", "d1"]),
            ("destroy", &["p5"]),
            ("deliver_depot", &["p3", "d1", "w1"]),
            ("deliver_depot", &["p4", "d1", "w1"]),
            ("collect", &["p3", "w1"]),
            ("destroy", &["p3"]),
            ("collect", &["p4", "w1"]),
            ("destroy", &["p4"]),
            ("t_stop", &["d1"]),
        ],
    )
}

/// Day three: `p6` was registered at `w2` but collected at `w1`, and its
/// delivery was logged without a deliverer; `p7` was rung by `d1` and handed
/// over to `d2` for the depot delivery.
pub fn log_three() -> SystemLog {
    log_from_timeline(
        "e",
        &[
            ("t_start", &["d1"]),
            ("t_start", &["d2"]),
            ("create", &["p6"]),
            ("order_depot", &["p6"]),
            ("register_depot", &["p6", "w2"]),
            ("create", &["p7"]),
            ("order_home", &["p7"]),
            ("ring", &["p7", "d1"]),
            ("register_depot", &["p7", "w1"]),
            ("t_stop", &["d1"]),
            ("deliver_depot", &["p6", "w2"]),
            ("collect", &["p6", "w1"]),
            ("destroy", &["p6"]),
            ("deliver_depot", &["p7", "d2", "w1"]),
            ("collect", &["p7", "w1"]),
            ("destroy", &["p7"]),
            ("t_stop", &["d2"]),
        ],
    )
}

/// Day four: the ring for `p8` was recorded late, after the package was
/// already gone, and `d1` rang for `p9`, then rang and delivered `p10` before
/// coming back to deliver `p9`.
pub fn log_four() -> SystemLog {
    log_from_timeline(
        "e",
        &[
            ("t_start", &["d1"]),
            ("create", &["p8"]),
            ("order_home", &["p8"]),
            ("create", &["p9"]),
            ("order_home", &["p9"]),
            ("create", &["p10"]),
            ("order_home", &["p10"]),
            ("deliver_home", &["p8", "d1"]),
            ("destroy", &["p8"]),
            ("ring", &["p8", "d1"]),
            ("ring", &["p9", "d1"]),
            ("ring", &["p10", "d1"]),
            ("deliver_home", &["p10", "d1"]),
            ("destroy", &["p10"]),
            ("deliver_home", &["p9", "d1"]),
            ("destroy", &["p9"]),
            ("t_stop", &["d1"]),
        ],
    )
}
