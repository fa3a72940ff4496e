//! Generator for the UAV search-and-retrieve mission model.
//!
//! The UAV takes off from base (0,0), sweeps the arena in lawnmower order
//! and, on detecting an object, approaches, descends, grabs, climbs and
//! carries it back to base cell by cell. It returns to base to recharge
//! when the battery falls to `b_low`, and abandons the search once the time
//! limit is reached. All costs are integers; probabilities are written as
//! exact decimals.
//!
//! Modes of `m`:
//!
//! | m | mode | m | mode |
//! |---|------|---|------|
//! | 0 | idle/takeoff | 7 | transport |
//! | 1 | system check, then fly to `ret` | 8 | deposit |
//! | 2 | search | 9 | return to base |
//! | 3 | target approach | 10 | recharge |
//! | 4 | descend | 11 | emergency landing |
//! | 5 | grab | 12 | mission complete |
//! | 6 | ascend | 13 | mission abandoned |

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::microsim::ActionStats;
use crate::scalar::{format_probability, rational_from_f64, Rational};
use crate::statespace::{BuildMode, BuildOptions};

pub mod mode {
    pub const IDLE: i64 = 0;
    pub const CHECK: i64 = 1;
    pub const SEARCH: i64 = 2;
    pub const APPROACH: i64 = 3;
    pub const DESCEND: i64 = 4;
    pub const GRAB: i64 = 5;
    pub const ASCEND: i64 = 6;
    pub const TRANSPORT: i64 = 7;
    pub const DEPOSIT: i64 = 8;
    pub const RETURN: i64 = 9;
    pub const RECHARGE: i64 = 10;
    pub const EMERGENCY: i64 = 11;
    pub const COMPLETE: i64 = 12;
    pub const ABANDONED: i64 = 13;
}

/// `(time, battery)` consumed by one execution of an action.
pub type Cost = (i64, i64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Arena size in cells.
    pub width: i64,
    pub height: i64,
    pub objects: i64,
    /// Mission time limit, s.
    pub time_limit: i64,
    /// Battery capacity, charge units.
    pub capacity: i64,
    pub b_low: i64,
    /// Time and charge to fly one cell, searching or carrying.
    pub cell_time: i64,
    pub cell_battery: i64,
    /// `[lo, hi]` of the approach time and charge.
    pub approach_time: (i64, i64),
    pub approach_battery: (i64, i64),
    /// Detection probability per searched cell.
    pub alpha: f64,
    /// Probability of dropping the object per transport step.
    pub drop: f64,
    /// Probability of an emergency landing per airborne step.
    pub emergency: f64,
    /// Probability that a grab attempt fails and is repeated.
    pub grab_failure: f64,
    pub takeoff: Cost,
    pub check: Cost,
    pub descend: Cost,
    pub grab: Cost,
    pub ascend: Cost,
    pub deposit: Cost,
    /// Time for a full recharge at base, s.
    pub recharge_time: i64,
}

impl Default for ScenarioParams {
    /// The 4x4 desk scenario.
    fn default() -> Self {
        Self {
            width: 4,
            height: 4,
            objects: 1,
            time_limit: 100,
            capacity: 60,
            b_low: 15,
            cell_time: 1,
            cell_battery: 1,
            approach_time: (3, 3),
            approach_battery: (2, 2),
            alpha: 0.25,
            drop: 0.05,
            emergency: 0.001,
            grab_failure: 0.0,
            takeoff: (1, 1),
            check: (1, 0),
            descend: (1, 1),
            grab: (1, 1),
            ascend: (1, 1),
            deposit: (1, 1),
            recharge_time: 10,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario parameter: {0}")]
    Invalid(String),
    #[error("unknown scenario parameter `{0}`")]
    UnknownKey(String),
    #[error("budget-exceeded: estimated {estimate} states exceeds the budget of {limit}")]
    Budget { estimate: u128, limit: usize },
    #[error("calibration table has no `{0}` entry")]
    MissingStat(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.width < 1 || self.height < 1 {
            return Err(invalid("arena must have at least one cell"));
        }
        if self.objects < 1 {
            return Err(invalid("object count must be at least 1"));
        }
        if self.time_limit <= 0 {
            return Err(invalid("time limit must be positive"));
        }
        if !(0 < self.b_low && self.b_low < self.capacity) {
            return Err(invalid("need 0 < b_low < capacity"));
        }
        for (name, p) in [
            ("alpha", self.alpha),
            ("drop", self.drop),
            ("emergency", self.emergency),
            ("grab_failure", self.grab_failure),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.grab_failure >= 1.0 {
            return Err(invalid("grab_failure must be below 1"));
        }
        if self.cell_time < 1 {
            return Err(invalid("cell_time must be at least 1"));
        }
        let costs = [
            ("cell", (self.cell_time, self.cell_battery)),
            ("takeoff", self.takeoff),
            ("check", self.check),
            ("descend", self.descend),
            ("grab", self.grab),
            ("ascend", self.ascend),
            ("deposit", self.deposit),
            ("recharge", (self.recharge_time, 0)),
        ];
        for (name, (t, b)) in costs {
            if t < 0 || b < 0 {
                return Err(invalid(format!("{name} costs must be non-negative")));
            }
        }
        for (name, (lo, hi)) in [
            ("approach_time", self.approach_time),
            ("approach_battery", self.approach_battery),
        ] {
            if lo < 0 || lo > hi {
                return Err(invalid(format!("{name} must satisfy 0 <= lo <= hi")));
            }
        }
        if self.grab.0 < 1 && self.grab_failure > 0.0 {
            return Err(invalid("a grab that can fail must take time"));
        }
        if self.b_low + 1 < self.cell_battery {
            // search must be affordable whenever its weight is positive
            return Err(invalid("b_low must be at least cell_battery - 1"));
        }
        if self.takeoff.1 > self.capacity {
            return Err(invalid("takeoff needs more than the battery capacity"));
        }
        Ok(())
    }

    /// Sets one field from text. Values are read as JSON, so tuples are
    /// written `[3,4]`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        let mut obj = serde_json::to_value(&*self).expect("plain data serialises");
        let map = obj.as_object_mut().expect("struct serialises to an object");
        let slot = map
            .get_mut(key)
            .ok_or_else(|| ScenarioError::UnknownKey(key.to_string()))?;
        *slot = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        *self = serde_json::from_value(obj).map_err(|e| invalid(format!("{key}: {e}")))?;
        Ok(())
    }

    pub fn keys() -> Vec<String> {
        match serde_json::to_value(ScenarioParams::default()) {
            Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }

    /// Takes per-cell costs, detection, approach intervals and event
    /// probabilities from a calibration. Point costs are the ceiling of the
    /// sample mean; the approach keeps the full integer interval.
    pub fn apply_stats(&mut self, stats: &ActionStats) -> Result<(), ScenarioError> {
        let get = |name: &str| {
            stats
                .get(name)
                .ok_or_else(|| ScenarioError::MissingStat(name.to_string()))
        };
        let point = |name: &str| -> Result<Cost, ScenarioError> {
            let s = get(name)?;
            Ok((s.time.mean.ceil() as i64, s.battery.mean.ceil() as i64))
        };
        let search = get("search")?;
        self.cell_time = (search.time.mean.ceil() as i64).max(1);
        self.cell_battery = search.battery.mean.ceil() as i64;
        self.alpha = search
            .prob
            .ok_or_else(|| ScenarioError::MissingStat("search.prob".into()))?;
        let approach = get("approach")?;
        self.approach_time = (approach.time.lo, approach.time.hi);
        self.approach_battery = (approach.battery.lo, approach.battery.hi);
        self.descend = point("descend")?;
        self.grab = point("grab")?;
        self.ascend = point("ascend")?;
        self.deposit = point("deposit")?;
        self.grab_failure = get("grab")?.prob.unwrap_or(0.0);
        self.drop = get("transport")?.prob.unwrap_or(0.0);
        Ok(())
    }

    /// Rough state count: cells x time limit x battery capacity.
    pub fn estimated_states(&self) -> u128 {
        (self.width * self.height) as u128 * self.time_limit as u128 * self.capacity as u128
    }

    /// Largest value `t` can reach: one action started before the limit,
    /// then the flight home.
    pub fn max_time(&self) -> i64 {
        let home = (self.width + self.height - 2) * self.cell_time;
        let longest = [
            self.takeoff.0,
            self.check.0 + home,
            self.cell_time,
            self.approach_time.1,
            self.descend.0,
            self.grab.0,
            self.ascend.0,
            self.deposit.0,
            self.recharge_time,
            home,
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        self.time_limit - 1 + longest + home
    }

    pub fn has_intervals(&self) -> bool {
        self.approach_time.0 != self.approach_time.1
            || self.approach_battery.0 != self.approach_battery.1
    }

    /// Build mode suited to the parameters: interval when the approach is
    /// uncertain, autonomous otherwise.
    pub fn natural_mode(&self) -> BuildMode {
        if self.has_intervals() {
            BuildMode::Interval
        } else {
            BuildMode::Autonomous
        }
    }
}

/// Next cell of the lawnmower sweep: rightwards on even rows, leftwards on
/// odd rows, one row up at the end of a row, back to (0,0) after the last
/// cell.
pub fn search_pattern(p: &ScenarioParams, (x, y): (i64, i64)) -> (i64, i64) {
    let rightwards = y % 2 == 0;
    let row_end = if rightwards { x == p.width - 1 } else { x == 0 };
    if !row_end {
        (if rightwards { x + 1 } else { x - 1 }, y)
    } else if y == p.height - 1 {
        (0, 0)
    } else {
        (x, y + 1)
    }
}

/// A probabilistic branch before it is written out.
struct Branch {
    prob: Rational,
    updates: Vec<String>,
}

fn branch(prob: Rational, updates: &[&str]) -> Branch {
    Branch {
        prob,
        updates: updates.iter().map(|s| s.to_string()).collect(),
    }
}

fn exact(p: f64) -> Rational {
    rational_from_f64(p).expect("validated probability is finite")
}

struct Writer<'a> {
    p: &'a ScenarioParams,
    emergency: Rational,
    out: String,
}

impl Writer<'_> {
    fn line(&mut self, text: impl AsRef<str>) {
        self.out.push_str(text.as_ref());
        self.out.push('\n');
    }

    /// Writes `[action] guard -> branches;`. Airborne steps gain an
    /// emergency branch; `cost` is added to every other branch; a battery
    /// requirement adds a twin command that lands when it is not met.
    #[allow(clippy::too_many_arguments)]
    fn command(
        &mut self,
        action: &str,
        guard: &str,
        weight: Option<&str>,
        cost: (&str, &str),
        needs: &str,
        airborne: bool,
        branches: Vec<Branch>,
    ) {
        let mut all = Vec::new();
        let e = if airborne {
            self.emergency.clone()
        } else {
            Rational::zero()
        };
        if !e.is_zero() {
            all.push(branch(e.clone(), &["m:=11"]));
        }
        let keep = Rational::one() - &e;
        for mut b in branches {
            b.prob *= &keep;
            if cost.0 != "0" {
                b.updates.push(format!("t+={}", cost.0));
            }
            if cost.1 != "0" {
                b.updates.push(format!("b-={}", cost.1));
            }
            all.push(b);
        }
        all.retain(|b| !b.prob.is_zero());
        let guard_text = if needs == "0" {
            guard.to_string()
        } else {
            format!("{guard} & b >= {needs}")
        };
        let weight = weight.map(|w| format!(" weight {w}")).unwrap_or_default();
        let outcomes: Vec<String> = all
            .iter()
            .map(|b| format!("{}:({})", format_probability(&b.prob), b.updates.join(", ")))
            .collect();
        let line = format!(
            "[{action}] {guard_text}{weight} -> {};",
            outcomes.join(" + ")
        );
        self.line(line);
        if needs != "0" {
            self.line(format!("[Exhausted] {guard} & b < {needs} -> 1:(m:=11);"));
        }
    }

    fn finish(self) -> String {
        self.out
    }

    fn header(&mut self) {
        let p = self.p;
        self.line("// UAV search-and-retrieve mission");
        for (name, v) in [
            ("W", p.width),
            ("H", p.height),
            ("LIMIT", p.time_limit),
            ("CAP", p.capacity),
            ("BLOW", p.b_low),
            ("DT", p.cell_time),
            ("DB", p.cell_battery),
            ("RECHARGE", p.recharge_time),
        ] {
            self.line(format!("const {name} = {v};"));
        }
        self.line(format!(
            "const interval T_ap = [{}..{}];",
            p.approach_time.0, p.approach_time.1
        ));
        self.line(format!(
            "const interval B_ap = [{}..{}];",
            p.approach_battery.0, p.approach_battery.1
        ));
        self.line("");
        self.line("var m : [0..13] init 0;");
        self.line(format!("var obj : [0..{0}] init {0};", p.objects));
        self.line("var carry : [0..1] init 0;");
        self.line(format!("var pos_x : [0..{}] init 0;", p.width - 1));
        self.line(format!("var pos_y : [0..{}] init 0;", p.height - 1));
        self.line(format!("var ret_x : [0..{}] init 0;", p.width - 1));
        self.line(format!("var ret_y : [0..{}] init 0;", p.height - 1));
        self.line(format!("var t : [0..{}] init 0;", p.max_time()));
        self.line(format!("var b : [0..{0}] init {0};", p.capacity));
        self.line("");
        self.line("label success = m = 12 & obj = 0;");
        self.line("label missed = m = 12 & obj > 0;");
        self.line("label emergency = m = 11;");
        self.line("label timeout = m = 13;");
        self.line("");
        self.line("reward time = t' - t;");
        self.line("reward battery = max(b - b', 0);");
        self.line("reward drops = [Transport] m' = 4;");
        self.line("reward recharges = [Recharge] 1;");
        self.line("");
    }

    fn commands(&mut self) {
        let p = self.p;
        let one = Rational::one;
        let alpha = exact(p.alpha);
        let drop = exact(p.drop);
        let fail = exact(p.grab_failure);
        let c = |(t, b): Cost| (t.to_string(), b.to_string());
        let active = "t < LIMIT";

        let (tt, tb) = c(p.takeoff);
        self.command(
            "Takeoff",
            "m = 0",
            None,
            (&tt, &tb),
            &tb,
            false,
            vec![branch(one(), &["m:=1"])],
        );

        let (ct, cb) = (
            format!("{} + (ret_x + ret_y) * DT", p.check.0),
            format!("{} + (ret_x + ret_y) * DB", p.check.1),
        );
        self.command(
            "Check",
            &format!("m = 1 & {active}"),
            None,
            (&ct, &cb),
            &cb,
            true,
            vec![branch(one(), &["pos_x:=ret_x", "pos_y:=ret_y", "m:=2"])],
        );

        let nx = "pos_y % 2 = 0 ? (pos_x < W - 1 ? pos_x + 1 : (pos_y = H - 1 ? 0 : pos_x)) \
                  : (pos_x > 0 ? pos_x - 1 : (pos_y = H - 1 ? 0 : pos_x))";
        let ny = "pos_y % 2 = 0 ? (pos_x < W - 1 ? pos_y : (pos_y = H - 1 ? 0 : pos_y + 1)) \
                  : (pos_x > 0 ? pos_y : (pos_y = H - 1 ? 0 : pos_y + 1))";
        let (mx, my) = (format!("pos_x:={nx}"), format!("pos_y:={ny}"));
        let (rx, ry) = (format!("ret_x:={nx}"), format!("ret_y:={ny}"));
        self.command(
            "Search",
            &format!("m = 2 & {active} & b >= DB"),
            Some("b > BLOW"),
            ("DT", "DB"),
            "0",
            true,
            vec![
                branch(one() - &alpha, &[&mx, &my]),
                branch(alpha.clone(), &[&mx, &my, &rx, &ry, "carry:=1", "m:=3"]),
            ],
        );
        self.line(format!(
            "[BatteryLow] m = 2 & {active} weight 1 - (b > BLOW) -> 1:(ret_x:=pos_x, ret_y:=pos_y, m:=9);"
        ));

        self.command(
            "Approach",
            &format!("m = 3 & {active}"),
            None,
            ("T_ap", "B_ap"),
            "B_ap.hi",
            true,
            vec![branch(one(), &["m:=4"])],
        );
        let (dt, db) = c(p.descend);
        self.command(
            "Descend",
            &format!("m = 4 & {active}"),
            None,
            (&dt, &db),
            &db,
            true,
            vec![branch(one(), &["m:=5"])],
        );
        let (gt, gb) = c(p.grab);
        self.command(
            "Grab",
            &format!("m = 5 & {active}"),
            None,
            (&gt, &gb),
            &gb,
            true,
            vec![branch(fail.clone(), &[]), branch(one() - &fail, &["m:=6"])],
        );
        let (at, ab) = c(p.ascend);
        self.command(
            "Ascend",
            &format!("m = 6 & {active}"),
            None,
            (&at, &ab),
            &ab,
            true,
            vec![branch(one(), &["m:=(pos_x + pos_y = 0 ? 8 : 7)"])],
        );
        let tx = "pos_x:=(pos_x > 0 ? pos_x - 1 : 0)";
        let ty = "pos_y:=(pos_x > 0 ? pos_y : pos_y - 1)";
        self.command(
            "Transport",
            &format!("m = 7 & {active} & pos_x + pos_y > 0"),
            None,
            ("DT", "DB"),
            "DB",
            true,
            vec![
                branch(one() - &drop, &[tx, ty, "m:=(pos_x + pos_y = 1 ? 8 : 7)"]),
                branch(drop.clone(), &[tx, ty, "m:=4"]),
            ],
        );
        let (pt, pb) = c(p.deposit);
        let dep = format!("m = 8 & {active}");
        self.command(
            "Deposit",
            &format!("{dep} & obj = 1"),
            None,
            (&pt, &pb),
            &pb,
            true,
            vec![branch(one(), &["obj:=0", "carry:=0", "m:=12"])],
        );
        if p.objects > 1 {
            self.command(
                "Deposit",
                &format!("{dep} & obj > 1"),
                None,
                (&pt, &pb),
                &pb,
                true,
                vec![branch(
                    one(),
                    &[
                        "obj-=1",
                        "carry:=0",
                        &format!("m:=(b - {pb} <= BLOW ? 10 : 1)"),
                    ],
                )],
            );
        }
        self.command(
            "Return",
            "m = 9",
            None,
            ("(pos_x + pos_y) * DT", "(pos_x + pos_y) * DB"),
            "(pos_x + pos_y) * DB",
            true,
            vec![branch(
                one(),
                &[
                    "pos_x:=0",
                    "pos_y:=0",
                    "m:=(t + (pos_x + pos_y) * DT >= LIMIT ? (carry = 1 ? 13 : 12) : 10)",
                ],
            )],
        );
        self.command(
            "Recharge",
            &format!("m = 10 & {active}"),
            None,
            ("RECHARGE", "0"),
            "0",
            false,
            vec![branch(one(), &["b:=CAP", "m:=1"])],
        );
        self.line("[TimeUp] m >= 1 & m <= 10 & m != 9 & t >= LIMIT -> 1:(m:=9);");
    }
}

/// Model text for `p`, refusing parameters whose estimated state count
/// exceeds the budget in `APFSM_STATE_BUDGET` (default 5e7).
pub fn generate_model(p: &ScenarioParams) -> Result<String, ScenarioError> {
    generate_model_with_budget(p, BuildOptions::from_env(BuildMode::Interval).state_budget)
}

pub fn generate_model_with_budget(
    p: &ScenarioParams,
    budget: usize,
) -> Result<String, ScenarioError> {
    p.validate()?;
    let estimate = p.estimated_states();
    if estimate > budget as u128 {
        return Err(ScenarioError::Budget {
            estimate,
            limit: budget,
        });
    }
    let mut w = Writer {
        p,
        emergency: exact(p.emergency),
        out: String::new(),
    };
    w.header();
    w.commands();
    Ok(w.finish())
}
