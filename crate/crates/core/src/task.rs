//! Task identifiers and a small fixed-order container keyed by task.

use std::fmt;

/// The three alignment tasks: whole-sentence matching plus the two
/// keyword-restricted matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TaskId {
    Fusion,
    Entity,
    Action,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::Fusion, TaskId::Entity, TaskId::Action];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Fusion => "fusion",
            TaskId::Entity => "entity",
            TaskId::Action => "action",
        }
    }

    pub fn parse(s: &str) -> Option<TaskId> {
        match s {
            "fusion" => Some(TaskId::Fusion),
            "entity" => Some(TaskId::Entity),
            "action" => Some(TaskId::Action),
            _ => None,
        }
    }

    /// Index in the fixed task order (also the expert/gate column order).
    pub fn index(self) -> usize {
        match self {
            TaskId::Fusion => 0,
            TaskId::Entity => 1,
            TaskId::Action => 2,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per task, iterated in the fixed order fusion, entity, action.
/// Used instead of a map so iteration order is always deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct PerTask<T> {
    pub fusion: T,
    pub entity: T,
    pub action: T,
}

impl<T> PerTask<T> {
    pub fn get(&self, task: TaskId) -> &T {
        match task {
            TaskId::Fusion => &self.fusion,
            TaskId::Entity => &self.entity,
            TaskId::Action => &self.action,
        }
    }

    pub fn get_mut(&mut self, task: TaskId) -> &mut T {
        match task {
            TaskId::Fusion => &mut self.fusion,
            TaskId::Entity => &mut self.entity,
            TaskId::Action => &mut self.action,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (TaskId, &T)> {
        TaskId::ALL.iter().map(move |&t| (t, self.get(t)))
    }
}

impl<T: Clone> PerTask<T> {
    pub fn splat(value: T) -> Self {
        PerTask {
            fusion: value.clone(),
            entity: value.clone(),
            action: value,
        }
    }
}
