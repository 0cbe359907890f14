use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{check_token, Manifest, ManifestWriter};

/// One tag task: a name and its ordered classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagTask {
    pub name: String,
    pub classes: Vec<String>,
}

/// The ordered list of tag tasks a model predicts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TagTask>", into = "Vec<TagTask>")]
pub struct TagSchema {
    tasks: Vec<TagTask>,
}

impl TagSchema {
    pub fn new(tasks: Vec<TagTask>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::config("schema", "at least one task is required"));
        }
        let mut names = HashSet::new();
        for task in &tasks {
            check_token("schema.task", &task.name)?;
            if !names.insert(task.name.as_str()) {
                return Err(Error::config(
                    "schema",
                    format!("duplicate task name `{}`", task.name),
                ));
            }
            if task.classes.len() < 2 {
                return Err(Error::config(
                    "schema",
                    format!("task `{}` needs at least two classes", task.name),
                ));
            }
            let mut seen = HashSet::new();
            for class in &task.classes {
                check_token("schema.class", class)?;
                if !seen.insert(class.as_str()) {
                    return Err(Error::config(
                        "schema",
                        format!("duplicate class `{class}` in task `{}`", task.name),
                    ));
                }
            }
        }
        Ok(TagSchema { tasks })
    }

    /// Stain, species and organ tags of the histology slide collection.
    pub fn histology() -> Self {
        let task = |name: &str, classes: &[&str]| TagTask {
            name: name.to_string(),
            classes: classes.iter().map(|c| c.to_string()).collect(),
        };
        TagSchema {
            tasks: vec![
                task("stain", &["H&E", "IHC", "Special"]),
                task(
                    "species",
                    &["Human", "Monkey", "Mouse", "Pig", "Rat", "Zebrafish"],
                ),
                task(
                    "organ",
                    &[
                        "Bone",
                        "Brain",
                        "Breast",
                        "Cecum",
                        "Colon",
                        "Heart",
                        "Skin",
                        "Skin Dorsal",
                        "Intestine",
                        "Kidney",
                        "Liver",
                        "Lung",
                        "Pancreas",
                        "Prostate",
                        "Spleen",
                        "Skin Ventral",
                    ],
                ),
            ],
        }
    }

    pub fn tasks(&self) -> &[TagTask] {
        &self.tasks
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.classes.len()).collect()
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.name == name)
    }

    /// Fails with both schemas printed when `other` differs from `self`.
    pub fn ensure_matches(&self, other: &TagSchema) -> Result<()> {
        if self != other {
            return Err(Error::SchemaMismatch {
                expected: self.to_string(),
                found: other.to_string(),
            });
        }
        Ok(())
    }
}

impl TagSchema {
    pub(crate) fn write_manifest(&self, w: &mut ManifestWriter) {
        for task in &self.tasks {
            let mut fields = vec![task.name.as_str()];
            fields.extend(task.classes.iter().map(String::as_str));
            w.line("task", &fields);
        }
    }

    pub(crate) fn from_manifest(m: &Manifest) -> Result<Self> {
        let tasks = m
            .all("task")
            .map(|line| match line.fields.split_first() {
                Some((name, classes)) => Ok(TagTask {
                    name: name.clone(),
                    classes: classes.to_vec(),
                }),
                None => Err(m.error("task", format!("line {}: empty task line", line.number))),
            })
            .collect::<Result<Vec<_>>>()?;
        TagSchema::new(tasks).map_err(|e| m.error("task", e.to_string()))
    }
}

impl Default for TagSchema {
    fn default() -> Self {
        Self::histology()
    }
}

impl fmt::Display for TagSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .tasks
            .iter()
            .map(|t| format!("{}({})", t.name, t.classes.join("|")))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

impl TryFrom<Vec<TagTask>> for TagSchema {
    type Error = Error;

    fn try_from(tasks: Vec<TagTask>) -> Result<Self> {
        TagSchema::new(tasks)
    }
}

impl From<TagSchema> for Vec<TagTask> {
    fn from(s: TagSchema) -> Self {
        s.tasks
    }
}
