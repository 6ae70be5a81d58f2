"""Communication model: range-limited neighbor sensing, the denial-of-service
gate on the leader broadcast, and graph matrices.

The leader's state is broadcast to every follower. A stationary attacker
suppresses that broadcast for designated followers whenever they are within
attack range (inclusive); suppressed followers fall back to local neighbor
measurements within communication range d_c.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .world import WorldState


@dataclass
class CommConfig:
    d_c: float = 0.8                       # neighbor sensing range, m
    kappa: float = 3.0                     # attack range, m (inclusive)
    p_dos: tuple[float, float, float] = (0.0, -1.0, 4.0)  # attacker position, m
    attacked: tuple[int, ...] = (1,)       # follower world indices under attack
    n_max: int = 6                         # neighbor buffer capacity

    def __post_init__(self):
        if self.d_c <= 0:
            raise ValueError("d_c must be > 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if any(i == 0 for i in self.attacked):
            raise ValueError("the leader (index 0) cannot be in attacked")

    @property
    def p_dos_vec(self) -> np.ndarray:
        return np.asarray(self.p_dos, dtype=np.float64)


@dataclass
class NeighborInfo:
    id: int
    rel: np.ndarray       # p_i - p_j: relative position from neighbor j to agent i
    velocity: np.ndarray  # neighbor velocity
    distance: float


@dataclass
class CommView:
    """Everything agent i can currently hear."""
    leader_link_alive: bool
    rel_to_leader: np.ndarray  # p_i - p_1; exactly zero when the link is dead
    neighbors: list[NeighborInfo] = field(default_factory=list)


def dos_gate(p_agent: np.ndarray, p_leader: np.ndarray,
             cfg: CommConfig) -> tuple[bool, np.ndarray]:
    """Leader-link state for an attacked agent at position p_agent.

    Inside attack range (inclusive) the link is dead and the relative
    position is the exact zero vector; outside, the true relative position
    passes through. Pure function of its inputs.
    """
    dist = float(np.linalg.norm(np.asarray(p_agent, dtype=np.float64) - cfg.p_dos_vec))
    if dist <= cfg.kappa:
        return False, np.zeros(3)
    return True, np.asarray(p_agent, dtype=np.float64) - np.asarray(p_leader, dtype=np.float64)


def neighbors_of(world: WorldState, i: int, cfg: CommConfig) -> list[NeighborInfo]:
    """Agents within d_c of agent i, nearest first, truncated to n_max.

    Ties break toward the lower agent id.
    """
    p_i = world.drones[i].position
    found = []
    for j, drone in enumerate(world.drones):
        if j == i:
            continue
        d = float(np.linalg.norm(drone.position - p_i))
        if d <= cfg.d_c:
            found.append(NeighborInfo(id=j, rel=p_i - drone.position,
                                      velocity=drone.velocity.copy(), distance=d))
    found.sort(key=lambda nb: (nb.distance, nb.id))
    return found[:cfg.n_max]


def build_comm_view(world: WorldState, i: int, cfg: CommConfig,
                    attack_enabled: bool = True) -> CommView:
    """Assemble agent i's view: gated leader link plus range neighbors.

    Followers outside the attacked set always hear the leader broadcast,
    regardless of their distance to the attacker.
    """
    p_i = world.drones[i].position
    p_leader = world.drones[0].position
    if attack_enabled and i in cfg.attacked:
        alive, rel = dos_gate(p_i, p_leader, cfg)
    else:
        alive, rel = True, p_i - p_leader
    neighbors = neighbors_of(world, i, cfg) if not alive else []
    return CommView(leader_link_alive=alive, rel_to_leader=rel, neighbors=neighbors)


@dataclass
class GraphMatrices:
    adjacency: np.ndarray
    degree: np.ndarray
    laplacian: np.ndarray


def build_matrices(world: WorldState, cfg: CommConfig) -> GraphMatrices:
    """Unit-weight adjacency under the range rule (before any truncation),
    degree matrix, and graph Laplacian L = D - W."""
    pos = world.positions()
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    w = (dist <= cfg.d_c).astype(np.float64)
    np.fill_diagonal(w, 0.0)
    d = np.diag(w.sum(axis=1))
    return GraphMatrices(adjacency=w, degree=d, laplacian=d - w)
