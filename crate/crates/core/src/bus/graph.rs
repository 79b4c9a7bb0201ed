use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, ReentrantMutex};
use serde::Serialize;
use serde_json::Value;

use super::name::{InvalidName, TopicName};
use crate::clock::{SharedClock, Stamp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error(transparent)]
    InvalidName(#[from] InvalidName),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("unknown topic {0}")]
    UnknownTopic(TopicName),
    #[error("topic {topic} already advertised as {existing:?}, not {requested:?}")]
    TypeConflict {
        topic: TopicName,
        existing: String,
        requested: String,
    },
    #[error("payload on {topic} is missing required fields {missing:?}")]
    SchemaMismatch {
        topic: TopicName,
        missing: Vec<String>,
    },
    #[error("service {0} already registered")]
    NameConflict(TopicName),
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("service {service} timed out after {timeout_ms} ms")]
    Timeout { service: String, timeout_ms: u64 },
    #[error("service {service} failed: {reason}")]
    HandlerFault { service: String, reason: String },
}

/// A message as seen by subscribers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusMessage {
    pub topic: TopicName,
    pub type_name: String,
    pub payload: Value,
    pub seq: u64,
    pub stamp: Stamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SubscriptionId(u64);

impl SubscriptionId {
    pub fn raw(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRecord {
    pub name: String,
    pub registered_at: Stamp,
    pub owned_subscriptions: BTreeSet<SubscriptionId>,
    pub owned_services: BTreeSet<TopicName>,
}

/// Request/reply handler. An `Err` surfaces to the caller as [`BusError::HandlerFault`].
pub type ServiceHandler = Arc<dyn Fn(Value) -> Result<Value, String> + Send + Sync>;

type Sink = Box<dyn FnMut(&BusMessage) + Send>;

struct Slot {
    id: SubscriptionId,
    node: String,
    topic: TopicName,
    active: AtomicBool,
    sink: Mutex<Sink>,
}

impl Slot {
    fn deliver(&self, msg: &BusMessage) {
        let mut sink = self.sink.lock();
        if self.active.load(Ordering::SeqCst) {
            (sink)(msg);
        }
    }
}

struct TopicEntry {
    type_name: String,
    advertisers: BTreeSet<String>,
}

struct NodeEntry {
    record: NodeRecord,
    advertised: BTreeSet<TopicName>,
}

#[derive(Default)]
struct Graph {
    nodes: BTreeMap<String, NodeEntry>,
    topics: BTreeMap<TopicName, TopicEntry>,
    subs: HashMap<SubscriptionId, Arc<Slot>>,
    subs_by_topic: HashMap<TopicName, Vec<Arc<Slot>>>,
    services: BTreeMap<TopicName, (String, ServiceHandler)>,
    schemas: HashMap<String, Vec<String>>,
    seqs: HashMap<TopicName, u64>,
    dispatch: HashMap<TopicName, Arc<ReentrantMutex<()>>>,
}

impl Graph {
    fn remove_node(&mut self, name: &str) -> bool {
        let Some(entry) = self.nodes.remove(name) else {
            return false;
        };
        for id in &entry.record.owned_subscriptions {
            self.drop_subscription(*id);
        }
        for svc in &entry.record.owned_services {
            self.services.remove(svc);
        }
        for topic in &entry.advertised {
            let empty = match self.topics.get_mut(topic) {
                Some(t) => {
                    t.advertisers.remove(name);
                    t.advertisers.is_empty()
                }
                None => false,
            };
            if empty {
                self.topics.remove(topic);
            }
        }
        true
    }

    fn drop_subscription(&mut self, id: SubscriptionId) -> Option<Arc<Slot>> {
        let slot = self.subs.remove(&id)?;
        slot.active.store(false, Ordering::SeqCst);
        if let Some(list) = self.subs_by_topic.get_mut(&slot.topic) {
            list.retain(|s| s.id != id);
            if list.is_empty() {
                self.subs_by_topic.remove(&slot.topic);
            }
        }
        Some(slot)
    }

    fn node_mut(&mut self, node: &str) -> Result<&mut NodeEntry, BusError> {
        self.nodes
            .get_mut(node)
            .ok_or_else(|| BusError::UnknownNode(node.to_string()))
    }
}

/// Thread-safe topic/service graph.
///
/// Callbacks run outside the graph lock. Each topic has its own dispatch
/// lock, which is what keeps per-subscriber delivery in publish order when
/// several threads publish to the same topic.
pub struct Bus {
    clock: SharedClock,
    graph: Mutex<Graph>,
    next_sub: AtomicU64,
}

impl Bus {
    pub fn new(clock: SharedClock) -> Self {
        Self {
            clock,
            graph: Mutex::new(Graph::default()),
            next_sub: AtomicU64::new(1),
        }
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    pub fn now_ms(&self) -> Stamp {
        self.clock.now_ms()
    }

    /// Registers a node, replacing (and fully cleaning up) any live node of
    /// the same name.
    pub fn register_node(&self, name: &str) -> Result<NodeRecord, BusError> {
        if name.is_empty() {
            return Err(BusError::InvalidName(InvalidName(String::new())));
        }
        let record = NodeRecord {
            name: name.to_string(),
            registered_at: self.clock.now_ms(),
            owned_subscriptions: BTreeSet::new(),
            owned_services: BTreeSet::new(),
        };
        let mut g = self.graph.lock();
        g.remove_node(name);
        g.nodes.insert(
            name.to_string(),
            NodeEntry {
                record: record.clone(),
                advertised: BTreeSet::new(),
            },
        );
        Ok(record)
    }

    pub fn deregister_node(&self, name: &str) -> bool {
        self.graph.lock().remove_node(name)
    }

    pub fn list_nodes(&self) -> BTreeSet<String> {
        self.graph.lock().nodes.keys().cloned().collect()
    }

    pub fn is_node_live(&self, name: &str) -> bool {
        self.graph.lock().nodes.contains_key(name)
    }

    pub fn node(&self, name: &str) -> Option<NodeRecord> {
        self.graph.lock().nodes.get(name).map(|n| n.record.clone())
    }

    /// Declares the required top-level fields for messages of `type_name`.
    pub fn register_schema(&self, type_name: &str, required: &[&str]) {
        self.graph.lock().schemas.insert(
            type_name.to_string(),
            required.iter().map(|s| s.to_string()).collect(),
        );
    }

    pub fn advertise(&self, node: &str, topic: &str, type_name: &str) -> Result<(), BusError> {
        let topic = TopicName::new(topic)?;
        let mut g = self.graph.lock();
        if !g.nodes.contains_key(node) {
            return Err(BusError::UnknownNode(node.to_string()));
        }
        match g.topics.get_mut(&topic) {
            Some(t) if t.type_name != type_name => {
                return Err(BusError::TypeConflict {
                    topic,
                    existing: t.type_name.clone(),
                    requested: type_name.to_string(),
                })
            }
            Some(t) => {
                t.advertisers.insert(node.to_string());
            }
            None => {
                g.topics.insert(
                    topic.clone(),
                    TopicEntry {
                        type_name: type_name.to_string(),
                        advertisers: BTreeSet::from([node.to_string()]),
                    },
                );
            }
        }
        g.node_mut(node)?.advertised.insert(topic);
        Ok(())
    }

    /// Withdraws `node` as a publisher of `topic`; the topic disappears with
    /// its last advertiser.
    pub fn unadvertise(&self, node: &str, topic: &str) -> Result<bool, BusError> {
        let topic = TopicName::new(topic)?;
        let mut g = self.graph.lock();
        let removed = g.node_mut(node)?.advertised.remove(&topic);
        if removed {
            let empty = g
                .topics
                .get_mut(&topic)
                .map(|t| {
                    t.advertisers.remove(node);
                    t.advertisers.is_empty()
                })
                .unwrap_or(false);
            if empty {
                g.topics.remove(&topic);
            }
        }
        Ok(removed)
    }

    pub fn topic_type(&self, topic: &str) -> Option<String> {
        let topic = TopicName::new(topic).ok()?;
        self.graph
            .lock()
            .topics
            .get(&topic)
            .map(|t| t.type_name.clone())
    }

    pub fn list_topics(&self) -> Vec<(TopicName, String)> {
        self.graph
            .lock()
            .topics
            .iter()
            .map(|(k, v)| (k.clone(), v.type_name.clone()))
            .collect()
    }

    /// Publishes `payload` and returns how many subscriptions it was dispatched to.
    pub fn publish(&self, node: &str, topic: &str, payload: Value) -> Result<usize, BusError> {
        let topic = TopicName::new(topic)?;
        let (type_name, dispatch) = {
            let mut g = self.graph.lock();
            if !g.nodes.contains_key(node) {
                return Err(BusError::UnknownNode(node.to_string()));
            }
            let type_name = match g.topics.get(&topic) {
                Some(t) => t.type_name.clone(),
                None => return Err(BusError::UnknownTopic(topic)),
            };
            if let Some(required) = g.schemas.get(&type_name) {
                let missing: Vec<String> = required
                    .iter()
                    .filter(|f| payload.get(f.as_str()).is_none())
                    .cloned()
                    .collect();
                if !missing.is_empty() {
                    return Err(BusError::SchemaMismatch { topic, missing });
                }
            }
            let dispatch = g.dispatch.entry(topic.clone()).or_default().clone();
            (type_name, dispatch)
        };

        let _order = dispatch.lock();
        let (msg, slots) = {
            let mut g = self.graph.lock();
            let seq = g.seqs.entry(topic.clone()).or_insert(0);
            *seq += 1;
            let seq = *seq;
            let slots = g.subs_by_topic.get(&topic).cloned().unwrap_or_default();
            let msg = BusMessage {
                topic,
                type_name,
                payload,
                seq,
                stamp: self.clock.now_ms(),
            };
            (msg, slots)
        };
        for slot in &slots {
            slot.deliver(&msg);
        }
        Ok(slots.len())
    }

    /// Subscribes `sink` to `topic`. The topic does not need to be advertised yet.
    pub fn subscribe<F>(&self, node: &str, topic: &str, sink: F) -> Result<SubscriptionId, BusError>
    where
        F: FnMut(&BusMessage) + Send + 'static,
    {
        let topic = TopicName::new(topic)?;
        let id = SubscriptionId(self.next_sub.fetch_add(1, Ordering::Relaxed));
        let slot = Arc::new(Slot {
            id,
            node: node.to_string(),
            topic: topic.clone(),
            active: AtomicBool::new(true),
            sink: Mutex::new(Box::new(sink)),
        });
        let mut g = self.graph.lock();
        g.node_mut(node)?.record.owned_subscriptions.insert(id);
        g.subs.insert(id, slot.clone());
        g.subs_by_topic.entry(topic).or_default().push(slot);
        Ok(id)
    }

    pub fn unsubscribe(&self, id: SubscriptionId) -> bool {
        let mut g = self.graph.lock();
        match g.drop_subscription(id) {
            Some(slot) => {
                if let Some(n) = g.nodes.get_mut(&slot.node) {
                    n.record.owned_subscriptions.remove(&id);
                }
                true
            }
            None => false,
        }
    }

    pub fn subscription_count(&self) -> usize {
        self.graph.lock().subs.len()
    }

    pub fn subscriber_count(&self, topic: &str) -> usize {
        let Ok(topic) = TopicName::new(topic) else {
            return 0;
        };
        self.graph
            .lock()
            .subs_by_topic
            .get(&topic)
            .map_or(0, Vec::len)
    }

    pub fn register_service<F>(&self, node: &str, name: &str, handler: F) -> Result<(), BusError>
    where
        F: Fn(Value) -> Result<Value, String> + Send + Sync + 'static,
    {
        let name = TopicName::new(name)?;
        let mut g = self.graph.lock();
        if !g.nodes.contains_key(node) {
            return Err(BusError::UnknownNode(node.to_string()));
        }
        if g.services.contains_key(&name) {
            return Err(BusError::NameConflict(name));
        }
        g.services
            .insert(name.clone(), (node.to_string(), Arc::new(handler)));
        g.node_mut(node)?.record.owned_services.insert(name);
        Ok(())
    }

    pub fn has_service(&self, name: &str) -> bool {
        let Ok(name) = TopicName::new(name) else {
            return false;
        };
        self.graph.lock().services.contains_key(&name)
    }

    pub fn list_services(&self) -> Vec<TopicName> {
        self.graph.lock().services.keys().cloned().collect()
    }

    /// Calls a service on a worker thread and waits at most `timeout_ms`.
    ///
    /// The handler runs exactly once; on timeout its eventual result is discarded.
    pub fn call_service(
        &self,
        name: &str,
        request: Value,
        timeout_ms: u64,
    ) -> Result<Value, BusError> {
        let handler = {
            let g = self.graph.lock();
            TopicName::new(name)
                .ok()
                .and_then(|n| g.services.get(&n).map(|(_, h)| h.clone()))
                .ok_or_else(|| BusError::UnknownService(name.to_string()))?
        };
        let (tx, rx) = mpsc::sync_channel(1);
        std::thread::Builder::new()
            .name(format!("svc{name}"))
            .spawn(move || {
                let _ = tx.send(handler(request));
            })
            .map_err(|e| BusError::HandlerFault {
                service: name.to_string(),
                reason: e.to_string(),
            })?;
        match rx.recv_timeout(Duration::from_millis(timeout_ms)) {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(reason)) => Err(BusError::HandlerFault {
                service: name.to_string(),
                reason,
            }),
            Err(RecvTimeoutError::Timeout) => Err(BusError::Timeout {
                service: name.to_string(),
                timeout_ms,
            }),
            Err(RecvTimeoutError::Disconnected) => Err(BusError::HandlerFault {
                service: name.to_string(),
                reason: "HandlerFault: handler panicked".to_string(),
            }),
        }
    }
}
