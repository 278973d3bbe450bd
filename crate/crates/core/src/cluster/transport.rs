//! Point-to-point delivery between cluster nodes.
//!
//! Delivery is reliable and ordered per sender/receiver pair; nothing is
//! assumed about ordering across senders.

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use super::message::{read_frame, write_frame, Message};
use crate::error::{Error, Result};

pub trait Transport: Send {
    fn node_id(&self) -> usize;

    /// Number of nodes, this one included.
    fn nodes(&self) -> usize;

    fn send_to(&mut self, node: usize, msg: &Message) -> Result<()>;

    /// Sends to every other node.
    fn broadcast(&mut self, msg: &Message) -> Result<()> {
        let me = self.node_id();
        for node in (0..self.nodes()).filter(|&n| n != me) {
            self.send_to(node, msg)?;
        }
        Ok(())
    }

    /// Next pending message, without blocking.
    fn try_recv(&mut self) -> Result<Option<Message>>;

    /// Waits up to `timeout`. `Ok(None)` on timeout; an error once no peer
    /// can ever deliver again.
    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Message>>;
}

/// A lone node. Sends go nowhere and nothing ever arrives.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullTransport {
    pub node_id: usize,
}

impl Transport for NullTransport {
    fn node_id(&self) -> usize {
        self.node_id
    }

    fn nodes(&self) -> usize {
        1
    }

    fn send_to(&mut self, _: usize, _: &Message) -> Result<()> {
        Ok(())
    }

    fn broadcast(&mut self, _: &Message) -> Result<()> {
        Ok(())
    }

    fn try_recv(&mut self) -> Result<Option<Message>> {
        Ok(None)
    }

    fn recv_timeout(&mut self, _: Duration) -> Result<Option<Message>> {
        Err(Error::Transport("no peers".into()))
    }
}

/// In-process queues.
#[derive(Debug)]
pub struct QueueTransport {
    node_id: usize,
    peers: Vec<Option<Sender<Message>>>,
    inbox: Receiver<Message>,
}

/// Builds `n` fully connected queue endpoints; endpoint `i` is node `i`.
pub fn queue_network(n: usize) -> Vec<QueueTransport> {
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..n).map(|_| mpsc::channel()).unzip();
    receivers
        .into_iter()
        .enumerate()
        .map(|(i, inbox)| QueueTransport {
            node_id: i,
            peers: senders
                .iter()
                .enumerate()
                .map(|(j, s)| (j != i).then(|| s.clone()))
                .collect(),
            inbox,
        })
        .collect()
}

impl Transport for QueueTransport {
    fn node_id(&self) -> usize {
        self.node_id
    }

    fn nodes(&self) -> usize {
        self.peers.len()
    }

    fn send_to(&mut self, node: usize, msg: &Message) -> Result<()> {
        let Some(Some(tx)) = self.peers.get(node) else {
            return Err(Error::Transport(format!("no route to node {node}")));
        };
        // a peer that already finished is not an error for the sender
        let _ = tx.send(msg.clone());
        Ok(())
    }

    fn try_recv(&mut self) -> Result<Option<Message>> {
        match self.inbox.try_recv() {
            Ok(m) => Ok(Some(m)),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(Error::Transport("all peers gone".into())),
        }
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Message>> {
        match self.inbox.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport("all peers gone".into())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TcpOptions {
    /// How long to keep retrying outgoing connections.
    pub connect_timeout: Duration,
    /// Run-length encode long vectors.
    pub compress: bool,
}

impl Default for TcpOptions {
    fn default() -> Self {
        Self {
            connect_timeout: Duration::from_secs(30),
            compress: false,
        }
    }
}

/// Length-prefixed JSON frames over TCP.
///
/// Each node listens on its own address and opens one outgoing stream to
/// every peer. Incoming streams are drained by reader threads into a
/// single inbox.
#[derive(Debug)]
pub struct TcpTransport {
    node_id: usize,
    nodes: usize,
    outgoing: BTreeMap<usize, TcpStream>,
    inbox: Receiver<Message>,
    compress: bool,
}

/// Node id of the `position`-th entry of a peer list that skips `node_id`.
pub fn peer_id(node_id: usize, position: usize) -> usize {
    if position < node_id {
        position
    } else {
        position + 1
    }
}

impl TcpTransport {
    /// `peers` lists every other node's address in node-id order, skipping
    /// this node.
    pub fn connect(node_id: usize, bind: SocketAddr, peers: &[SocketAddr], options: &TcpOptions) -> Result<Self> {
        let listener = TcpListener::bind(bind)?;
        Self::with_listener(node_id, listener, peers, options)
    }

    pub fn with_listener(
        node_id: usize,
        listener: TcpListener,
        peers: &[SocketAddr],
        options: &TcpOptions,
    ) -> Result<Self> {
        let nodes = peers.len() + 1;
        if node_id >= nodes {
            return Err(Error::invalid(format!(
                "node id {node_id} out of range for {nodes} nodes"
            )));
        }
        let (tx, inbox) = mpsc::channel();
        let (ready_tx, ready) = mpsc::channel();
        let expected = peers.len();
        thread::Builder::new()
            .name(format!("pbsearch-accept-{node_id}"))
            .spawn(move || accept_loop(listener, tx, ready_tx, expected))?;

        let deadline = Instant::now() + options.connect_timeout;
        let mut outgoing = BTreeMap::new();
        for (pos, addr) in peers.iter().enumerate() {
            let stream = connect_with_retry(*addr, deadline)?;
            stream.set_nodelay(true)?;
            outgoing.insert(peer_id(node_id, pos), stream);
        }
        // No node starts searching before every peer has connected in, so a
        // fast node cannot finish and close its listener under a slow one.
        for _ in 0..expected {
            let left = deadline.saturating_duration_since(Instant::now());
            ready
                .recv_timeout(left)
                .map_err(|_| Error::Transport("peers did not all connect in time".into()))?;
        }
        Ok(Self {
            node_id,
            nodes,
            outgoing,
            inbox,
            compress: options.compress,
        })
    }
}

fn connect_with_retry(addr: SocketAddr, deadline: Instant) -> Result<TcpStream> {
    loop {
        match TcpStream::connect_timeout(&addr, Duration::from_millis(500)) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => {
                return Err(Error::Transport(format!("cannot reach {addr}: {e}")))
            }
            Err(_) => thread::sleep(Duration::from_millis(100)),
        }
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Message>, ready: Sender<()>, expected: usize) {
    for stream in listener.incoming().take(expected) {
        let Ok(mut stream) = stream else { continue };
        let _ = ready.send(());
        let tx = tx.clone();
        thread::spawn(move || loop {
            match read_frame(&mut stream) {
                Ok(Some(m)) => {
                    if tx.send(m).is_err() {
                        return;
                    }
                }
                Ok(None) => return,
                Err(e) => {
                    log::warn!("dropping peer stream: {e}");
                    return;
                }
            }
        });
    }
}

impl Transport for TcpTransport {
    fn node_id(&self) -> usize {
        self.node_id
    }

    fn nodes(&self) -> usize {
        self.nodes
    }

    fn send_to(&mut self, node: usize, msg: &Message) -> Result<()> {
        let stream = self
            .outgoing
            .get_mut(&node)
            .ok_or_else(|| Error::Transport(format!("no route to node {node}")))?;
        if let Err(e) = write_frame(stream, msg, self.compress) {
            self.outgoing.remove(&node);
            return Err(Error::Transport(format!("send to node {node} failed: {e}")));
        }
        Ok(())
    }

    fn broadcast(&mut self, msg: &Message) -> Result<()> {
        let targets: Vec<usize> = self.outgoing.keys().copied().collect();
        for node in targets {
            if let Err(e) = self.send_to(node, msg) {
                log::warn!("{e}");
            }
        }
        if self.outgoing.is_empty() && self.nodes > 1 {
            return Err(Error::Transport("every peer link is down".into()));
        }
        Ok(())
    }

    fn try_recv(&mut self) -> Result<Option<Message>> {
        match self.inbox.try_recv() {
            Ok(m) => Ok(Some(m)),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(Error::Transport("all peer streams closed".into())),
        }
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Message>> {
        match self.inbox.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport("all peer streams closed".into())),
        }
    }
}
