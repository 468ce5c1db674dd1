//! Message transports.
//!
//! [`ServerApi`] is the call surface clients train against. Both bundled
//! transports move every request and reply through the encoded frame format,
//! so an attached [`FrameInspector`] sees the exact bytes a network peer
//! would — that is what the privacy checks hook into.
//!
//! * [`InProcessTransport`] — encodes, inspects, decodes and dispatches into
//!   a server instance in the same process. Default for the simulator;
//!   concurrent callers exercise the server's real locking.
//! * [`TcpTransport`] — the same frames over a stream socket, one blocking
//!   request/reply exchange at a time per connection.

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use parking_lot::Mutex;
use thiserror::Error;

use fedccl_core::clustering::ClientProfile;
use fedccl_core::model::{ModelLevel, TrainingDelta};
use fedccl_core::Snapshot;

use crate::message::{
    decode_frame, encode_frame, read_frame, write_frame, ErrorCode, Frame, ServerMessage,
    WireError,
};
use crate::server::{FederationServer, RegisterOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("transport failure: {0}")]
    Connection(String),
    #[error("server rejected the request ({code:?}): {detail}")]
    Rejected { code: ErrorCode, detail: String },
    #[error("unexpected reply {0}")]
    UnexpectedReply(&'static str),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Direction of a frame as seen by an inspector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameDirection {
    ClientToServer,
    ServerToClient,
}

/// Callback observing every encoded frame that crosses a transport.
pub type FrameInspector = Arc<dyn Fn(FrameDirection, &[u8]) + Send + Sync>;

/// The server operations a client uses during its training cycles.
pub trait ServerApi: Send + Sync {
    fn register(&self, profile: &ClientProfile) -> Result<RegisterOutcome, TransportError>;

    fn request_model(
        &self,
        level: ModelLevel,
        cluster_key: Option<&str>,
    ) -> Result<Snapshot, TransportError>;

    /// Submits a trained snapshot plus its session delta; returns the
    /// accepted round.
    fn submit_update(
        &self,
        level: ModelLevel,
        cluster_key: Option<&str>,
        snapshot: &Snapshot,
        delta: &TrainingDelta,
    ) -> Result<u64, TransportError>;
}

fn expect_reply(reply: ServerMessage) -> Result<ServerMessage, TransportError> {
    if let ServerMessage::ErrorResponse { code, detail } = reply {
        Err(TransportError::Rejected { code, detail })
    } else {
        Ok(reply)
    }
}

/// In-process transport: frames are encoded, inspected, decoded and handed to
/// the server directly.
pub struct InProcessTransport {
    server: Arc<FederationServer>,
    sender: String,
    inspector: Option<FrameInspector>,
}

impl InProcessTransport {
    pub fn new(server: Arc<FederationServer>, sender: impl Into<String>) -> Self {
        Self {
            server,
            sender: sender.into(),
            inspector: None,
        }
    }

    pub fn with_inspector(mut self, inspector: FrameInspector) -> Self {
        self.inspector = Some(inspector);
        self
    }

    fn exchange(&self, message: ServerMessage) -> Result<ServerMessage, TransportError> {
        let request = Frame {
            sender: self.sender.clone(),
            message,
        };
        let request_bytes = encode_frame(&request)?;
        if let Some(inspector) = &self.inspector {
            inspector(FrameDirection::ClientToServer, &request_bytes);
        }
        let (decoded, _) = decode_frame(&request_bytes)?;

        let reply = self.server.handle_message(&decoded);

        let reply_bytes = encode_frame(&Frame {
            sender: "server".to_string(),
            message: reply,
        })?;
        if let Some(inspector) = &self.inspector {
            inspector(FrameDirection::ServerToClient, &reply_bytes);
        }
        let (reply_frame, _) = decode_frame(&reply_bytes)?;
        Ok(reply_frame.message)
    }
}

impl ServerApi for InProcessTransport {
    fn register(&self, profile: &ClientProfile) -> Result<RegisterOutcome, TransportError> {
        let reply = self.exchange(ServerMessage::RegisterClient {
            profile: profile.clone(),
        })?;
        match expect_reply(reply)? {
            ServerMessage::RegisterAck { assignments, merges } => {
                Ok(RegisterOutcome { assignments, merges })
            }
            other => Err(TransportError::UnexpectedReply(other.tag_name())),
        }
    }

    fn request_model(
        &self,
        level: ModelLevel,
        cluster_key: Option<&str>,
    ) -> Result<Snapshot, TransportError> {
        let reply = self.exchange(ServerMessage::RequestModel {
            level,
            cluster_key: cluster_key.map(str::to_string),
        })?;
        match expect_reply(reply)? {
            ServerMessage::ModelResponse { snapshot } => Ok(snapshot),
            other => Err(TransportError::UnexpectedReply(other.tag_name())),
        }
    }

    fn submit_update(
        &self,
        level: ModelLevel,
        cluster_key: Option<&str>,
        snapshot: &Snapshot,
        delta: &TrainingDelta,
    ) -> Result<u64, TransportError> {
        let reply = self.exchange(ServerMessage::UpdateModel {
            level,
            cluster_key: cluster_key.map(str::to_string),
            snapshot: snapshot.clone(),
            delta: *delta,
        })?;
        match expect_reply(reply)? {
            ServerMessage::UpdateAck { accepted_round } => Ok(accepted_round),
            other => Err(TransportError::UnexpectedReply(other.tag_name())),
        }
    }
}

/// Which operation a [`FaultInjector`] is about to forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApiCall {
    Register,
    RequestModel,
    SubmitUpdate,
}

/// Wraps a transport and fails calls the predicate selects; the failure shows
/// up as a connection error, as if the server were unreachable.
pub struct FaultInjector<T> {
    inner: T,
    should_fail: Box<dyn Fn(ApiCall, Option<&str>) -> bool + Send + Sync>,
}

impl<T: ServerApi> FaultInjector<T> {
    pub fn new(
        inner: T,
        should_fail: impl Fn(ApiCall, Option<&str>) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            inner,
            should_fail: Box::new(should_fail),
        }
    }

    fn check(&self, call: ApiCall, key: Option<&str>) -> Result<(), TransportError> {
        if (self.should_fail)(call, key) {
            Err(TransportError::Connection("injected fault".into()))
        } else {
            Ok(())
        }
    }
}

impl<T: ServerApi> ServerApi for FaultInjector<T> {
    fn register(&self, profile: &ClientProfile) -> Result<RegisterOutcome, TransportError> {
        self.check(ApiCall::Register, None)?;
        self.inner.register(profile)
    }

    fn request_model(
        &self,
        level: ModelLevel,
        cluster_key: Option<&str>,
    ) -> Result<Snapshot, TransportError> {
        self.check(ApiCall::RequestModel, cluster_key)?;
        self.inner.request_model(level, cluster_key)
    }

    fn submit_update(
        &self,
        level: ModelLevel,
        cluster_key: Option<&str>,
        snapshot: &Snapshot,
        delta: &TrainingDelta,
    ) -> Result<u64, TransportError> {
        self.check(ApiCall::SubmitUpdate, cluster_key)?;
        self.inner.submit_update(level, cluster_key, snapshot, delta)
    }
}

/// Handle to a running TCP acceptor; dropping it does not stop the server,
/// call [`TcpServerHandle::shutdown`].
pub struct TcpServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl TcpServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the acceptor with a throwaway connection.
        let _ = TcpStream::connect(self.addr);
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

/// Serves a federation server over TCP: one thread per connection, each
/// connection a sequence of length-prefixed request/reply frames.
pub fn serve_tcp(
    server: Arc<FederationServer>,
    addr: &str,
) -> std::io::Result<TcpServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_accept = stop.clone();
    let join = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if stop_accept.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let server = server.clone();
            std::thread::spawn(move || serve_connection(server, stream));
        }
    });
    Ok(TcpServerHandle {
        addr: local,
        stop,
        join: Some(join),
    })
}

fn serve_connection(server: Arc<FederationServer>, stream: TcpStream) {
    let mut reader = BufReader::new(match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    });
    let mut writer = BufWriter::new(stream);
    loop {
        let frame = match read_frame(&mut reader) {
            Ok(frame) => frame,
            Err(_) => return, // disconnect or corrupt stream, drop the session
        };
        let reply = server.handle_message(&frame);
        let out = Frame {
            sender: "server".to_string(),
            message: reply,
        };
        if write_frame(&mut writer, &out).is_err() {
            return;
        }
    }
}

/// Client side of the TCP transport.
pub struct TcpTransport {
    stream: Mutex<(BufReader<TcpStream>, BufWriter<TcpStream>)>,
    sender: String,
}

impl TcpTransport {
    pub fn connect(addr: &str, sender: impl Into<String>) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        let reader = BufReader::new(stream.try_clone()?);
        let writer = BufWriter::new(stream);
        Ok(Self {
            stream: Mutex::new((reader, writer)),
            sender: sender.into(),
        })
    }

    fn exchange(&self, message: ServerMessage) -> Result<ServerMessage, TransportError> {
        let frame = Frame {
            sender: self.sender.clone(),
            message,
        };
        let mut guard = self.stream.lock();
        let (reader, writer) = &mut *guard;
        write_frame(writer, &frame).map_err(|e| TransportError::Connection(e.to_string()))?;
        let reply = read_frame(reader).map_err(|e| TransportError::Connection(e.to_string()))?;
        Ok(reply.message)
    }
}

impl ServerApi for TcpTransport {
    fn register(&self, profile: &ClientProfile) -> Result<RegisterOutcome, TransportError> {
        let reply = self.exchange(ServerMessage::RegisterClient {
            profile: profile.clone(),
        })?;
        match expect_reply(reply)? {
            ServerMessage::RegisterAck { assignments, merges } => {
                Ok(RegisterOutcome { assignments, merges })
            }
            other => Err(TransportError::UnexpectedReply(other.tag_name())),
        }
    }

    fn request_model(
        &self,
        level: ModelLevel,
        cluster_key: Option<&str>,
    ) -> Result<Snapshot, TransportError> {
        let reply = self.exchange(ServerMessage::RequestModel {
            level,
            cluster_key: cluster_key.map(str::to_string),
        })?;
        match expect_reply(reply)? {
            ServerMessage::ModelResponse { snapshot } => Ok(snapshot),
            other => Err(TransportError::UnexpectedReply(other.tag_name())),
        }
    }

    fn submit_update(
        &self,
        level: ModelLevel,
        cluster_key: Option<&str>,
        snapshot: &Snapshot,
        delta: &TrainingDelta,
    ) -> Result<u64, TransportError> {
        let reply = self.exchange(ServerMessage::UpdateModel {
            level,
            cluster_key: cluster_key.map(str::to_string),
            snapshot: snapshot.clone(),
            delta: *delta,
        })?;
        match expect_reply(reply)? {
            ServerMessage::UpdateAck { accepted_round } => Ok(accepted_round),
            other => Err(TransportError::UnexpectedReply(other.tag_name())),
        }
    }
}
