//! A small C history with a list walk that lacks locking, plus a scripted
//! responder that reasons about it by inspecting the prompt text.
//!
//! History, oldest first:
//! - `base`: build files.
//! - `introducing`: creates `drivers/soundwire/bus.c` with an unlocked
//!   `list_for_each_entry_safe` walk.
//! - `unrelated_1`: touches the Makefile.
//! - `modifying`: changes only the message argument of the `dev_info` call
//!   inside the walk.
//! - `unrelated_2`: touches the Makefile.
//! - `fix`: takes `bus_lock` around the walk and updates documentation.

use std::path::Path;

use serde_json::json;

use super::{text, RepoBuilder};
use crate::llm::{ChatRequest, Responder, StepTag};
use crate::repo::CommitId;

pub const BUS_C: &str = "drivers/soundwire/bus.c";
pub const DOC: &str = "Documentation/soundwire/locking.txt";

pub const LOOP_LINE: &str = "\tlist_for_each_entry_safe(slave, tmp, &bus->slaves, node) {";
pub const OLD_INFO_LINE: &str = "\t\tdev_info(bus->dev, \"removing %s\\n\", slave->name);";
pub const INFO_LINE: &str = "\t\tdev_info(bus->dev, \"removing slave %s\\n\", slave->name);";

fn bus_c(info: &str, locked: bool) -> String {
    let mut lines = vec![
        "#include <linux/list.h>",
        "#include \"bus.h\"",
        "",
        "void sdw_bus_teardown(struct sdw_bus *bus)",
        "{",
        "\tstruct sdw_slave *slave, *tmp;",
        "",
    ];
    if locked {
        lines.push("\tmutex_lock(&bus->bus_lock);");
    }
    lines.extend([LOOP_LINE, info, "\t\tsdw_slave_free(slave);", "\t}"]);
    if locked {
        lines.push("\tmutex_unlock(&bus->bus_lock);");
    }
    lines.extend(["\tbus->ops = NULL;", "}"]);
    text(&lines)
}

pub struct LockingScenario {
    pub builder: RepoBuilder,
    pub base: CommitId,
    pub introducing: CommitId,
    pub modifying: CommitId,
    pub fix: CommitId,
}

impl LockingScenario {
    pub fn create(dir: &Path) -> Result<Self, git2::Error> {
        let mut b = RepoBuilder::init(dir)?;
        let base = b.commit(
            "Initial import",
            &[
                ("Makefile", Some("obj-y += drivers/\n")),
                ("drivers/soundwire/bus.h", Some("struct sdw_bus;\n")),
            ],
        )?;
        let introducing = b.commit(
            "soundwire: add bus teardown",
            &[(BUS_C, Some(&bus_c(OLD_INFO_LINE, false)))],
        )?;
        b.commit("build: enable soundwire", &[("Makefile", Some("obj-y += drivers/\nobj-y += soundwire/\n"))])?;
        let modifying = b.commit(
            "soundwire: clarify teardown message",
            &[(BUS_C, Some(&bus_c(INFO_LINE, false)))],
        )?;
        b.commit(
            "build: sort objects",
            &[("Makefile", Some("obj-y += soundwire/\nobj-y += drivers/\n"))],
        )?;
        let fix = b.commit(
            "soundwire: protect slave list during teardown\n\nSlaves can be added or removed while the bus is torn down.\nHold bus_lock while walking the list.",
            &[
                (BUS_C, Some(&bus_c(INFO_LINE, true))),
                (DOC, Some("Walk bus->slaves only with bus_lock held.\n")),
            ],
        )?;
        Ok(LockingScenario {
            builder: b,
            base,
            introducing,
            modifying,
            fix,
        })
    }
}

/// Text between `<tag>` and `</tag>` lines of a prompt.
pub fn section<'a>(prompt: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>\n");
    let close = format!("\n</{tag}>");
    let start = prompt.find(&open)? + open.len();
    let end = start + prompt[start..].find(&close)?;
    Some(&prompt[start..end])
}

fn fenced(v: serde_json::Value) -> String {
    format!("```json\n{v}\n```")
}

/// How the scripted model behaves in the ability check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbilityBehaviour {
    /// Labels each version by its content.
    Correct,
    /// Calls both versions buggy.
    BothBuggy,
    /// Labels each version opposite to its content.
    Swapped,
}

/// Answers every step for [`LockingScenario`].
#[derive(Debug, Clone, Copy)]
pub struct LockingResponder {
    pub ability: AbilityBehaviour,
}

impl LockingResponder {
    pub fn correct() -> Self {
        LockingResponder {
            ability: AbilityBehaviour::Correct,
        }
    }

    pub fn failing_ability() -> Self {
        LockingResponder {
            ability: AbilityBehaviour::BothBuggy,
        }
    }
}

/// The unlocked walk is the bug.
pub fn looks_buggy(code: &str) -> bool {
    code.contains("list_for_each_entry_safe") && !code.contains("mutex_lock")
}

fn word(buggy: bool) -> &'static str {
    if buggy {
        "buggy"
    } else {
        "clean"
    }
}

impl Responder for LockingResponder {
    fn respond(&self, req: &ChatRequest) -> String {
        let u = req.user.as_str();
        match req.tag {
            StepTag::Summarize => fenced(json!({
                "summary": "Takes bus_lock around the walk of bus->slaves in sdw_bus_teardown and documents the rule."
            })),
            StepTag::RootCause => fenced(json!({
                "root_cause": "sdw_bus_teardown walks bus->slaves with list_for_each_entry_safe without holding bus_lock, so concurrent add or remove corrupts the list.",
                "files": [BUS_C]
            })),
            StepTag::Hint => fenced(json!({
                "buggy_statements": [
                    {"statement": LOOP_LINE.trim(), "reason": "walks the list without bus_lock"},
                    {"statement": INFO_LINE.trim(), "reason": "dereferences a slave that may be freed concurrently"}
                ],
                "fixing_statements": [
                    {"statement": "mutex_lock(&bus->bus_lock);", "reason": "protects the walk"},
                    {"statement": "mutex_unlock(&bus->bus_lock);", "reason": "releases the lock"}
                ]
            })),
            StepTag::Ability => {
                let v1 = section(u, "version_1").unwrap_or("");
                let v2 = section(u, "version_2").unwrap_or("");
                let (a, b) = match self.ability {
                    AbilityBehaviour::Correct => (looks_buggy(v1), looks_buggy(v2)),
                    AbilityBehaviour::BothBuggy => (true, true),
                    AbilityBehaviour::Swapped => (!looks_buggy(v1), !looks_buggy(v2)),
                };
                fenced(json!({"version_1": word(a), "version_2": word(b)}))
            }
            StepTag::Containment => {
                let ctx = section(u, "context").unwrap_or("");
                let yes = ctx.contains("list_for_each_entry_safe");
                fenced(json!({"contains": if yes { "yes" } else { "no" }}))
            }
            StepTag::Verdict => {
                let ctx = section(u, "context").unwrap_or("");
                let buggy = looks_buggy(ctx);
                fenced(json!({
                    "verdict": word(buggy),
                    "reason": if buggy { "the walk is not protected by bus_lock" } else { "the walk is protected or absent" }
                }))
            }
            StepTag::Statements => fenced(json!({
                "statements": [INFO_LINE.trim(), LOOP_LINE.trim()]
            })),
            StepTag::Rank => fenced(json!({"ranking": [1, 0]})),
        }
    }
}
