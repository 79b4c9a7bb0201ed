use serde::{Deserialize, Serialize};

use crate::clock::Stamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlarmStatus {
    Active,
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alarm {
    pub id: String,
    pub text: String,
    pub status: AlarmStatus,
    pub raised_at: Stamp,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown alarm {0:?}")]
pub struct UnknownAlarm(pub String);

/// Safety alarm list in raise order.
///
/// An alarm is active while its condition is still detected. Clearing the
/// condition makes it inactive, and only inactive alarms go away on reset.
#[derive(Debug, Clone, Default)]
pub struct AlarmList {
    alarms: Vec<Alarm>,
}

impl AlarmList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or re-activates `id`, refreshing `raised_at`.
    pub fn raise(&mut self, id: &str, text: &str, now: Stamp) {
        match self.alarms.iter_mut().find(|a| a.id == id) {
            Some(a) => {
                a.status = AlarmStatus::Active;
                a.text = text.to_string();
                a.raised_at = now;
            }
            None => self.alarms.push(Alarm {
                id: id.to_string(),
                text: text.to_string(),
                status: AlarmStatus::Active,
                raised_at: now,
            }),
        }
    }

    pub fn clear_condition(&mut self, id: &str) -> Result<(), UnknownAlarm> {
        let alarm = self
            .alarms
            .iter_mut()
            .find(|a| a.id == id)
            .ok_or_else(|| UnknownAlarm(id.into()))?;
        alarm.status = AlarmStatus::Inactive;
        Ok(())
    }

    /// Drops inactive alarms and returns what is left.
    pub fn reset(&mut self) -> Vec<Alarm> {
        self.alarms.retain(|a| a.status == AlarmStatus::Active);
        self.alarms.clone()
    }

    pub fn list(&self) -> &[Alarm] {
        &self.alarms
    }

    pub fn has_active(&self) -> bool {
        self.alarms.iter().any(|a| a.status == AlarmStatus::Active)
    }
}
