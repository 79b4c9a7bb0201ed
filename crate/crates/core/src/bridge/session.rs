use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Weak};
use std::time::Duration;

use parking_lot::Mutex;
use serde_json::Value;

use super::protocol::{error_values, BridgeOp, Level, Op, ProtocolError};
use super::throttle::ThrottleGate;
use crate::access::{AccessPolicy, OpenPolicy, Role};
use crate::bus::{Bus, BusError, BusMessage, SubscriptionId, DEFAULT_SERVICE_TIMEOUT_MS};
use crate::clock::Stamp;
use crate::runtime::Tick;
use crate::service::fault;

/// Frame sink of one client connection.
pub type Outbound = Arc<dyn Fn(String) + Send + Sync>;

#[derive(Debug, Clone)]
pub struct BridgeOptions {
    pub service_timeout_ms: u64,
    /// Service whose successful response (`{"token", "role"}`) authenticates the session.
    pub login_service: Option<String>,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            service_timeout_ms: DEFAULT_SERVICE_TIMEOUT_MS,
            login_service: Some("/ui/login".into()),
        }
    }
}

struct Shared {
    bus: Arc<Bus>,
    policy: Arc<dyn AccessPolicy>,
    options: BridgeOptions,
    sessions: Mutex<BTreeMap<u64, Arc<SessionInner>>>,
    next_id: AtomicU64,
}

/// Exposes the bus to protocol clients. Cheap to clone.
#[derive(Clone)]
pub struct Bridge {
    shared: Arc<Shared>,
}

struct SubRecord {
    id: Option<SubscriptionId>,
    gate: ThrottleGate<Value>,
}

#[derive(Default)]
struct SessionState {
    closed: bool,
    user: Option<String>,
    role: Option<Role>,
    token: Option<String>,
    subs: BTreeMap<String, SubRecord>,
    open_calls: BTreeMap<String, String>,
    call_counter: u64,
}

struct SessionInner {
    id: u64,
    node: String,
    outbound: Outbound,
    state: Mutex<SessionState>,
    frame_order: Mutex<()>,
}

impl SessionInner {
    fn send(&self, frame: &BridgeOp) {
        (self.outbound)(frame.to_json());
    }

    fn flush(&self, now: Stamp) -> bool {
        let mut st = self.state.lock();
        let mut sent = false;
        for (topic, rec) in st.subs.iter_mut() {
            if let Some(msg) = rec.gate.flush(now) {
                self.send(&BridgeOp::publish(topic, msg));
                sent = true;
            }
        }
        sent
    }
}

/// One connected client.
#[derive(Clone)]
pub struct Session {
    inner: Arc<SessionInner>,
    shared: Arc<Shared>,
}

impl Bridge {
    pub fn new(bus: Arc<Bus>, policy: Arc<dyn AccessPolicy>, options: BridgeOptions) -> Self {
        Self {
            shared: Arc::new(Shared {
                bus,
                policy,
                options,
                sessions: Mutex::new(BTreeMap::new()),
                next_id: AtomicU64::new(1),
            }),
        }
    }

    /// Bridge without access control.
    pub fn open(bus: Arc<Bus>) -> Self {
        Self::new(bus, Arc::new(OpenPolicy), BridgeOptions::default())
    }

    pub fn bus(&self) -> &Arc<Bus> {
        &self.shared.bus
    }

    /// Creates a session and sends the greeting status frame.
    pub fn accept(&self, outbound: Outbound) -> Session {
        let id = self.shared.next_id.fetch_add(1, Ordering::Relaxed);
        let node = format!("bridge_session_{id}");
        // the name is unique per bridge, so registration cannot clash
        let _ = self.shared.bus.register_node(&node);
        let inner = Arc::new(SessionInner {
            id,
            node,
            outbound,
            state: Mutex::new(SessionState::default()),
            frame_order: Mutex::new(()),
        });
        self.shared.sessions.lock().insert(id, inner.clone());
        inner.send(&BridgeOp::greeting(id));
        Session {
            inner,
            shared: self.shared.clone(),
        }
    }

    /// In-process client backed by a channel.
    pub fn connect_local(&self) -> LocalClient {
        let (tx, rx) = mpsc::channel();
        let tx = Mutex::new(tx);
        let session = self.accept(Arc::new(move |frame| {
            let _ = tx.lock().send(frame);
        }));
        LocalClient { session, rx }
    }

    pub fn session_count(&self) -> usize {
        self.shared.sessions.lock().len()
    }
}

impl Tick for Bridge {
    fn tick(&self, now: Stamp) -> bool {
        let sessions: Vec<_> = self.shared.sessions.lock().values().cloned().collect();
        for s in sessions {
            s.flush(now);
        }
        // flushed frames go to clients, never back into the graph
        false
    }
}

impl Session {
    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn node_name(&self) -> &str {
        &self.inner.node
    }

    pub fn role(&self) -> Option<Role> {
        self.inner.state.lock().role.clone()
    }

    pub fn user(&self) -> Option<String> {
        self.inner.state.lock().user.clone()
    }

    pub fn is_closed(&self) -> bool {
        self.inner.state.lock().closed
    }

    pub fn subscription_count(&self) -> usize {
        self.inner.state.lock().subs.len()
    }

    pub fn subscribed_topics(&self) -> Vec<String> {
        self.inner.state.lock().subs.keys().cloned().collect()
    }

    pub fn pending_calls(&self) -> usize {
        self.inner.state.lock().open_calls.len()
    }

    /// Sends a frame produced outside normal dispatch (transport-level errors).
    pub fn send_frame(&self, frame: BridgeOp) {
        self.inner.send(&frame);
    }

    fn status(&self, level: Level, msg: impl Into<String>, id: Option<String>) {
        self.inner.send(&BridgeOp::status(level, msg, id));
    }

    /// Handles one inbound text frame. Errors are reported to the client as
    /// status frames; the connection is never dropped here.
    pub fn handle_frame(&self, raw: &str) {
        let _order = self.inner.frame_order.lock();
        if self.is_closed() {
            return;
        }
        let frame = match BridgeOp::parse(raw) {
            Ok(f) => f,
            Err(ProtocolError::Parse) => return self.status(Level::Error, "parse", None),
            Err(e) => {
                let id = e.id().map(str::to_string);
                return self.status(Level::Error, e.to_string(), id);
            }
        };
        match frame.op {
            Op::Subscribe => self.on_subscribe(frame),
            Op::Unsubscribe => self.on_unsubscribe(frame),
            Op::Advertise => self.on_advertise(frame),
            Op::Unadvertise => self.on_unadvertise(frame),
            Op::Publish => self.on_publish(frame),
            Op::CallService => self.on_call_service(frame),
            Op::ServiceResponse => self.status(
                Level::Warning,
                "no pending service call for this response",
                frame.id,
            ),
            Op::Status => {}
        }
    }

    fn on_subscribe(&self, frame: BridgeOp) {
        let topic = frame.topic.unwrap_or_default();
        let throttle = frame.throttle_rate.unwrap_or(0);
        let queue = frame.queue_length.unwrap_or(0) as usize;
        {
            let mut st = self.inner.state.lock();
            if let Some(rec) = st.subs.get_mut(&topic) {
                rec.gate.reconfigure(throttle, queue);
                return;
            }
            st.subs.insert(
                topic.clone(),
                SubRecord {
                    id: None,
                    gate: ThrottleGate::new(throttle, queue),
                },
            );
        }
        let weak: Weak<SessionInner> = Arc::downgrade(&self.inner);
        let bus = self.shared.bus.clone();
        let sink_topic = topic.clone();
        let result = self
            .shared
            .bus
            .subscribe(&self.inner.node, &topic, move |m: &BusMessage| {
                let Some(inner) = weak.upgrade() else { return };
                let now = bus.now_ms();
                let mut st = inner.state.lock();
                if st.closed {
                    return;
                }
                if let Some(rec) = st.subs.get_mut(&sink_topic) {
                    if let Some(msg) = rec.gate.offer(m.payload.clone(), now).emit {
                        inner.send(&BridgeOp::publish(&sink_topic, msg));
                    }
                }
            });
        let mut st = self.inner.state.lock();
        match result {
            Ok(id) => {
                if let Some(rec) = st.subs.get_mut(&topic) {
                    rec.id = Some(id);
                }
            }
            Err(e) => {
                st.subs.remove(&topic);
                drop(st);
                self.status(Level::Error, e.to_string(), frame.id);
            }
        }
    }

    fn on_unsubscribe(&self, frame: BridgeOp) {
        let topic = frame.topic.unwrap_or_default();
        let removed = self.inner.state.lock().subs.remove(&topic);
        match removed {
            Some(rec) => {
                if let Some(id) = rec.id {
                    self.shared.bus.unsubscribe(id);
                }
            }
            None => self.status(
                Level::Warning,
                format!("not subscribed to {topic}"),
                frame.id,
            ),
        }
    }

    fn on_advertise(&self, frame: BridgeOp) {
        let topic = frame.topic.unwrap_or_default();
        let ty = frame.type_name.unwrap_or_default();
        if let Err(e) = self.shared.bus.advertise(&self.inner.node, &topic, &ty) {
            self.status(Level::Error, e.to_string(), frame.id);
        }
    }

    fn on_unadvertise(&self, frame: BridgeOp) {
        let topic = frame.topic.unwrap_or_default();
        match self.shared.bus.unadvertise(&self.inner.node, &topic) {
            Ok(true) => {}
            Ok(false) => self.status(
                Level::Warning,
                format!("{topic} was not advertised"),
                frame.id,
            ),
            Err(e) => self.status(Level::Error, e.to_string(), frame.id),
        }
    }

    fn on_publish(&self, frame: BridgeOp) {
        let topic = frame.topic.unwrap_or_default();
        let role = self.role();
        if let Err(denied) = self.shared.policy.authorize_publish(role.as_ref(), &topic) {
            return self.status(Level::Error, denied.to_string(), frame.id);
        }
        let bus = &self.shared.bus;
        if bus.topic_type(&topic).is_none() {
            let ty = frame.type_name.as_deref().unwrap_or("json");
            if let Err(e) = bus.advertise(&self.inner.node, &topic, ty) {
                return self.status(Level::Error, e.to_string(), frame.id);
            }
        }
        if let Err(e) = bus.publish(&self.inner.node, &topic, frame.msg.unwrap_or(Value::Null)) {
            self.status(Level::Error, e.to_string(), frame.id);
        }
    }

    fn on_call_service(&self, frame: BridgeOp) {
        let service = frame.service.unwrap_or_default();
        let mut args = frame
            .args
            .unwrap_or_else(|| Value::Object(Default::default()));
        let (id, role, token) = {
            let mut st = self.inner.state.lock();
            st.call_counter += 1;
            let id = frame
                .id
                .unwrap_or_else(|| format!("call_service:{service}:{}", st.call_counter));
            (id, st.role.clone(), st.token.clone())
        };
        if let Err(denied) = self
            .shared
            .policy
            .authorize_call(role.as_ref(), &service, &args)
        {
            let resp = BridgeOp::service_response(&service, &id, false, error_values(denied));
            return self.inner.send(&resp);
        }
        if let Some(obj) = args.as_object_mut() {
            match token {
                Some(t) => obj.insert("token".into(), Value::String(t)),
                None => obj.remove("token"),
            };
        }
        self.inner
            .state
            .lock()
            .open_calls
            .insert(id.clone(), service.clone());

        let inner = self.inner.clone();
        let shared = self.shared.clone();
        std::thread::spawn(move || {
            let username = args
                .get("username")
                .and_then(Value::as_str)
                .map(str::to_string);
            let outcome =
                shared
                    .bus
                    .call_service(&service, args, shared.options.service_timeout_ms);
            let mut st = inner.state.lock();
            st.open_calls.remove(&id);
            if st.closed {
                return;
            }
            let resp = match outcome {
                Ok(values) => {
                    if shared.options.login_service.as_deref() == Some(service.as_str()) {
                        if let Some(role) = values.get("role").and_then(Value::as_str) {
                            st.role = Some(Role::new(role));
                            st.user = username;
                            st.token = values
                                .get("token")
                                .and_then(Value::as_str)
                                .map(str::to_string);
                        }
                    }
                    BridgeOp::service_response(&service, &id, true, values)
                }
                // handler errors already read "Kind: detail"
                Err(BusError::HandlerFault { reason, .. }) => {
                    BridgeOp::service_response(&service, &id, false, error_values(reason))
                }
                Err(e) => BridgeOp::service_response(&service, &id, false, error_values(fault(e))),
            };
            inner.send(&resp);
        });
    }

    /// Releases every subscription; responses of in-flight calls are discarded.
    pub fn close(&self) {
        {
            let mut st = self.inner.state.lock();
            if st.closed {
                return;
            }
            st.closed = true;
            st.subs.clear();
        }
        self.shared.bus.deregister_node(&self.inner.node);
        self.shared.sessions.lock().remove(&self.inner.id);
    }
}

/// Channel-backed client used by tests and the script runner.
pub struct LocalClient {
    pub session: Session,
    rx: Receiver<String>,
}

impl LocalClient {
    pub fn send(&self, frame: &BridgeOp) {
        self.session.handle_frame(&frame.to_json());
    }

    pub fn send_raw(&self, raw: &str) {
        self.session.handle_frame(raw);
    }

    pub fn recv(&self, timeout: Duration) -> Option<Value> {
        match self.rx.recv_timeout(timeout) {
            Ok(s) => serde_json::from_str(&s).ok(),
            Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => None,
        }
    }

    pub fn try_recv(&self) -> Option<Value> {
        self.rx
            .try_recv()
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
    }

    pub fn drain(&self) -> Vec<Value> {
        std::iter::from_fn(|| self.try_recv()).collect()
    }

    /// Calls a service and waits for the matching response frame; other
    /// frames received meanwhile are returned alongside.
    pub fn call(
        &self,
        service: &str,
        args: Value,
        id: &str,
        timeout: Duration,
    ) -> (Option<Value>, Vec<Value>) {
        self.send(&BridgeOp::call_service(service, args, id));
        let deadline = std::time::Instant::now() + timeout;
        let mut others = Vec::new();
        while let Some(left) = deadline.checked_duration_since(std::time::Instant::now()) {
            match self.recv(left) {
                Some(f) if f["op"] == "service_response" && f["id"] == id => {
                    return (Some(f), others)
                }
                Some(f) => others.push(f),
                None => break,
            }
        }
        (None, others)
    }
}
