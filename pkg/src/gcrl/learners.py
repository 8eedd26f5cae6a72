"""Training updates: an off-policy actor-critic with hindsight relabeling,
goal-conditioned behavioral cloning regularization, and goal-conditioned
adversarial imitation with three discriminator input modes, one of which
works from state-only demonstrations.

Conventions: actors output bounded actions through a scaled tanh head;
critics and discriminators consume actions normalized by the action bound.
The discriminator is trained so its output is low on agent transitions and
high on expert ones, and ``log D`` of a transition serves as the imitation
reward.
"""

from dataclasses import dataclass, field

import numpy as np

from gcrl import nn
from gcrl.envs import Trajectory
from gcrl.errors import ConfigError, NumericError, StateOnlyDemoError
from gcrl.replay import Batch, ExpertBuffer, ReplayBuffer

DISC_MODES = ("sg", "ssg", "sag")

LEARNER_NAMES = ("her", "bc", "bc_her", "gail", "goal_gail")

# per-learner defaults; explicit config values override these
LEARNER_PRESETS = {
    "her": dict(delta_gail=0.0, beta0=0.0, hindsight_p=0.8,
                relabel_expert=False, needs_demos=False, bc_only=False),
    "bc": dict(delta_gail=0.0, beta0=0.0, hindsight_p=0.0,
               relabel_expert=False, needs_demos=True, bc_only=True),
    "bc_her": dict(delta_gail=0.0, beta0=0.1, hindsight_p=0.8,
                   relabel_expert=False, needs_demos=True, bc_only=False),
    "gail": dict(delta_gail=1.0, beta0=0.0, hindsight_p=0.0,
                 relabel_expert=False, needs_demos=True, bc_only=False),
    "goal_gail": dict(delta_gail=0.1, beta0=0.0, hindsight_p=0.8,
                      relabel_expert=True, needs_demos=True, bc_only=False),
}


@dataclass
class Schedules:
    """Loss-weight schedules: the cloning weight decays geometrically with
    collected rollouts; the imitation reward weight anneals multiplicatively
    per iteration (factor 1.0 keeps it constant)."""

    hindsight_p: float = 0.8
    beta0: float = 0.1
    beta_decay: float = 0.9
    beta_period: int = 250
    delta_gail: float = 0.1
    delta_anneal: float = 1.0

    def beta(self, n_rollouts: int) -> float:
        return self.beta0 * self.beta_decay ** (n_rollouts // self.beta_period)


@dataclass
class ActorCritic:
    """Deterministic policy and action-value function with slow targets."""

    spec: object
    actor: nn.NetworkParams
    critic: nn.NetworkParams
    actor_target: nn.TargetParams
    critic_target: nn.TargetParams
    actor_opt: nn.AdamState
    critic_opt: nn.AdamState
    expl_eps: float
    expl_sigma: float

    @classmethod
    def create(cls, spec, rng, hidden=nn.DEFAULT_HIDDEN, actor_lr=1e-3,
               critic_lr=1e-3, polyak=0.005, expl_eps=0.2, expl_sigma_frac=0.1):
        sg = spec.state_dim + spec.goal_dim
        actor = nn.init_network([sg, *hidden, spec.action_dim], "tanh", rng)
        critic = nn.init_network([spec.action_dim + sg, *hidden, 1], "linear", rng)
        return cls(
            spec=spec,
            actor=actor,
            critic=critic,
            actor_target=nn.TargetParams.create(actor, polyak),
            critic_target=nn.TargetParams.create(critic, polyak),
            actor_opt=nn.adam_init(actor, learning_rate=actor_lr),
            critic_opt=nn.adam_init(critic, learning_rate=critic_lr),
            expl_eps=expl_eps,
            expl_sigma=expl_sigma_frac * spec.action_bound,
        )

    def policy(self, s, g) -> np.ndarray:
        """Deterministic bounded action(s) for state(s) and goal(s)."""
        single = np.ndim(s) == 1
        x = _concat(np.atleast_2d(s), np.atleast_2d(g))
        a = self.spec.action_bound * nn.forward(self.actor, x)
        return a[0] if single else a

    def q_values(self, a, s, g) -> np.ndarray:
        x = _concat(np.atleast_2d(a) / self.spec.action_bound,
                    np.atleast_2d(s), np.atleast_2d(g))
        return nn.forward(self.critic, x)[:, 0]

    def target_policy(self, s, g) -> np.ndarray:
        x = _concat(s, g)
        return self.spec.action_bound * nn.forward(self.actor_target.params, x)

    def target_q(self, a, s, g) -> np.ndarray:
        x = _concat(a / self.spec.action_bound, s, g)
        return nn.forward(self.critic_target.params, x)[:, 0]

    def update_targets(self) -> None:
        nn.polyak_update(self.actor_target, self.actor)
        nn.polyak_update(self.critic_target, self.critic)


def _concat(*arrays):
    return np.ascontiguousarray(np.concatenate(arrays, axis=1))


@dataclass
class Discriminator:
    """Goal-conditioned discriminator with a sigmoid head. ``input_mode``
    selects what it sees per transition: (s, g), (s, s2, g) or (s, a, g);
    the middle mode needs no expert actions. Outputs are clamped to
    [eta, 1 - eta] before logs."""

    params: nn.NetworkParams
    opt: nn.AdamState
    input_mode: str
    eta: float
    action_bound: float

    @classmethod
    def create(cls, spec, input_mode, rng, hidden=nn.DEFAULT_HIDDEN,
               learning_rate=1e-3, eta=1e-6):
        if input_mode not in DISC_MODES:
            raise ConfigError(
                f"unknown discriminator mode {input_mode!r}; valid modes: "
                f"{', '.join(DISC_MODES)}"
            )
        sg = spec.state_dim + spec.goal_dim
        width = {
            "sg": sg,
            "ssg": sg + spec.state_dim,
            "sag": sg + spec.action_dim,
        }[input_mode]
        params = nn.init_network([width, *hidden, 1], "sigmoid", rng)
        return cls(params, nn.adam_init(params, learning_rate=learning_rate),
                   input_mode, eta, spec.action_bound)

    def input_matrix(self, s, g, s2=None, a=None) -> np.ndarray:
        if self.input_mode == "sg":
            return _concat(np.atleast_2d(s), np.atleast_2d(g))
        if self.input_mode == "ssg":
            if s2 is None:
                raise ValueError("ssg discriminator needs next states")
            return _concat(np.atleast_2d(s), np.atleast_2d(s2), np.atleast_2d(g))
        if a is None:
            raise StateOnlyDemoError(
                "the (s, a, g) discriminator requires actions but the batch "
                "is state-only"
            )
        return _concat(np.atleast_2d(s), np.atleast_2d(a) / self.action_bound,
                       np.atleast_2d(g))

    def batch_inputs(self, batch: Batch, original_goals=False) -> np.ndarray:
        g = batch.g_orig if original_goals else batch.g
        return self.input_matrix(batch.s, g, s2=batch.s2, a=batch.a)

    def values(self, X) -> np.ndarray:
        """Raw sigmoid outputs in (0, 1), one per row."""
        return nn.forward(self.params, X)[:, 0]

    def clamped(self, X) -> np.ndarray:
        return np.clip(self.values(X), self.eta, 1.0 - self.eta)


# ------------------------------------------------------------ update steps


def bc_loss(ac: ActorCritic, expert_batch: Batch, sample_mask=None):
    """Mean squared action-cloning error and its exact actor gradient.

    With a ``sample_mask``, masked-out rows contribute zero loss and
    gradient (used by the optional value-filter)."""
    if expert_batch.a is None:
        raise StateOnlyDemoError(
            "behavioral cloning requires expert actions but the batch is "
            "state-only"
        )
    n = len(expert_batch)
    x = _concat(expert_batch.s, expert_batch.g)
    y, cache = nn.forward_cache(ac.actor, x)
    diff = ac.spec.action_bound * y - expert_batch.a
    if sample_mask is not None:
        diff = diff * sample_mask[:, None]
    loss = float(np.sum(diff * diff) / n)
    gy = (2.0 / n) * diff * ac.spec.action_bound
    grad, _ = nn.backward(ac.actor, cache, gy)
    return loss, grad


def td_targets(ac: ActorCritic, batch: Batch, gamma, rewards=None):
    """Bootstrap targets from the target networks. Terminal transitions
    (goal reached at s2, or stored episode end) are not bootstrapped."""
    terminal = (batch.r == 1.0) | batch.done
    r_train = batch.r if rewards is None else rewards
    a2 = ac.target_policy(batch.s2, batch.g)
    q2 = ac.target_q(a2, batch.s2, batch.g)
    y = r_train + gamma * (~terminal) * q2
    if not np.isfinite(y).all():
        raise NumericError("non-finite temporal-difference target")
    return y


def critic_update(ac: ActorCritic, batch: Batch, gamma, rewards=None) -> float:
    """One squared-TD-error minimization step; targets are constants."""
    y = td_targets(ac, batch, gamma, rewards)
    n = len(batch)
    x = _concat(batch.a / ac.spec.action_bound, batch.s, batch.g)
    q, cache = nn.forward_cache(ac.critic, x)
    td = q[:, 0] - y
    loss = float(np.mean(td * td))
    gy = (2.0 / n) * td[:, None]
    grad, _ = nn.backward(ac.critic, cache, gy)
    nn.adam_step(ac.critic, grad, ac.critic_opt)
    return loss


def policy_objective_gradient(ac: ActorCritic, batch: Batch, beta=0.0,
                              expert_batch=None, q_filter=False,
                              critic_fn=None):
    """Descent gradient of -(mean Q of the actor's actions) plus the
    beta-weighted cloning loss. Returns (gradient, mean Q, bc loss value).

    ``critic_fn(a, s, g) -> (q, dq_da)`` substitutes an analytic critic
    (testing hook).
    """
    n = len(batch)
    da = ac.spec.action_dim
    x = _concat(batch.s, batch.g)
    y, cache_a = nn.forward_cache(ac.actor, x)
    actions = ac.spec.action_bound * y
    if critic_fn is None:
        xq = _concat(actions / ac.spec.action_bound, batch.s, batch.g)
        q, cache_q = nn.forward_cache(ac.critic, xq)
        q_mean = float(np.mean(q))
        gq = np.full((n, 1), 1.0 / n)
        gx = nn.backward_input(ac.critic, cache_q, gq)
        # gradient of mean Q with respect to the raw action, then through
        # the bounded head: the action-bound factors cancel
        gy_actor = gx[:, :da]
    else:
        q, dq_da = critic_fn(actions, batch.s, batch.g)
        q_mean = float(np.mean(q))
        gy_actor = (dq_da / n) * ac.spec.action_bound
    grad_j, _ = nn.backward(ac.actor, cache_a, gy_actor)
    total = ac.actor.zeros_like()
    total.flat[...] = -grad_j.flat
    bc_value = None
    if beta > 0.0:
        if expert_batch is None:
            raise ValueError("beta > 0 requires an expert batch")
        mask = None
        if q_filter:
            q_expert = ac.q_values(expert_batch.a, expert_batch.s, expert_batch.g)
            pi_e = ac.policy(expert_batch.s, expert_batch.g)
            q_pi = ac.q_values(pi_e, expert_batch.s, expert_batch.g)
            mask = (q_expert > q_pi).astype(np.float64)
        bc_value, grad_bc = bc_loss(ac, expert_batch, sample_mask=mask)
        total.flat += beta * grad_bc.flat
    return total, q_mean, bc_value


def actor_update(ac: ActorCritic, batch: Batch, beta=0.0, expert_batch=None,
                 q_filter=False, critic_fn=None):
    """Ascend the critic through the actor; when ``beta > 0`` subtract the
    beta-weighted cloning gradient in the same optimizer step."""
    total, q_mean, bc_value = policy_objective_gradient(
        ac, batch, beta=beta, expert_batch=expert_batch, q_filter=q_filter,
        critic_fn=critic_fn,
    )
    nn.adam_step(ac.actor, total, ac.actor_opt)
    return q_mean, bc_value


def discriminator_update(disc: Discriminator, expert_batch: Batch,
                         agent_batch: Batch, agent_original_goals=False):
    """One minimization step of the adversarial objective
    mean(log D(agent)) + mean(log(1 - D(expert))), with outputs clamped to
    [eta, 1 - eta]. Returns (loss, mean D on agent, mean D on expert)."""
    xa = disc.batch_inputs(agent_batch, original_goals=agent_original_goals)
    xe = disc.batch_inputs(expert_batch)
    na, ne = xa.shape[0], xe.shape[0]
    x = np.ascontiguousarray(np.vstack([xa, xe]))
    y, cache = nn.forward_cache(disc.params, x)
    p = np.clip(y, disc.eta, 1.0 - disc.eta)
    pa, pe = p[:na, 0], p[na:, 0]
    loss = float(np.mean(np.log(pa)) + np.mean(np.log(1.0 - pe)))
    gy = np.empty_like(y)
    live = (y > disc.eta) & (y < 1.0 - disc.eta)
    gy[:na, 0] = 1.0 / (na * pa)
    gy[na:, 0] = -1.0 / (ne * (1.0 - pe))
    gy[~live] = 0.0
    grad, _ = nn.backward(disc.params, cache, gy)
    nn.adam_step(disc.params, grad, disc.opt)
    return loss, float(np.mean(pa)), float(np.mean(pe))


def gail_reward(disc: Discriminator, batch: Batch, delta,
                original_goals=False) -> np.ndarray:
    """Blend the indicator reward with the clamped log-discriminator:
    (1 - delta) * r + delta * log D."""
    x = disc.batch_inputs(batch, original_goals=original_goals)
    d = disc.clamped(x)
    return (1.0 - delta) * batch.r + delta * np.log(d)


def exploration_action(ac: ActorCritic, s, g, rng) -> np.ndarray:
    """Epsilon-uniform exploration around the deterministic policy with
    Gaussian action noise, clipped to the action box."""
    bound = ac.spec.action_bound
    if rng.random() < ac.expl_eps:
        return rng.uniform(-bound, bound, size=ac.spec.action_dim)
    a = ac.policy(s, g)
    if ac.expl_sigma > 0.0:
        a = a + rng.normal(0.0, ac.expl_sigma, size=a.shape)
    return np.clip(a, -bound, bound)


# --------------------------------------------------------------- trainer


@dataclass
class TrainerSettings:
    """Resolved per-run training knobs (learner presets already applied)."""

    learner: str = "goal_gail"
    disc_mode: str = "ssg"
    relabel_expert: bool = True
    bc_only: bool = False
    n_updates: int = 40
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    hidden: tuple = nn.DEFAULT_HIDDEN
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    disc_lr: float = 1e-3
    polyak: float = 0.005
    expl_eps: float = 0.2
    expl_sigma_frac: float = 0.1
    eta: float = 1e-6
    q_filter: bool = False
    disc_on_relabeled: bool = True


class Trainer:
    """One experiment's training state: networks, buffers, schedules and
    counters. ``run_iteration`` executes one outer loop: collect a rollout
    toward a sampled goal, update the discriminator once, then run the
    configured number of critic/actor updates on relabeled batches."""

    def __init__(self, env, schedules: Schedules, settings: TrainerSettings,
                 demos, env_rng, learner_rng):
        self.env = env
        self.schedules = schedules
        self.settings = settings
        self.env_rng = env_rng
        self.learner_rng = learner_rng
        self.ac = ActorCritic.create(
            env.spec, learner_rng, hidden=settings.hidden,
            actor_lr=settings.actor_lr, critic_lr=settings.critic_lr,
            polyak=settings.polyak, expl_eps=settings.expl_eps,
            expl_sigma_frac=settings.expl_sigma_frac,
        )
        self.uses_disc = schedules.delta_gail > 0.0 and not settings.bc_only
        self.disc = None
        if self.uses_disc:
            self.disc = Discriminator.create(
                env.spec, settings.disc_mode, learner_rng,
                hidden=settings.hidden, learning_rate=settings.disc_lr,
                eta=settings.eta,
            )
        self.replay = None
        if not settings.bc_only:
            self.replay = ReplayBuffer(env, capacity=settings.buffer_capacity)
        self.expert_buffer = None
        if demos is not None:
            self.expert_buffer = ExpertBuffer(
                env, demos, relabel_enabled=settings.relabel_expert
            )
        self.uses_bc = settings.bc_only or schedules.beta0 > 0.0
        if (self.uses_bc or self.uses_disc) and self.expert_buffer is None:
            raise ConfigError(
                f"learner {settings.learner!r} needs demonstrations but none "
                "were provided"
            )
        self.iteration = 0
        self.rollouts = 0
        self.env_steps = 0
        self.current_delta = schedules.delta_gail

    def policy(self, s, g):
        return self.ac.policy(s, g)

    def _collect_rollout(self):
        env = self.env
        goal = env.sample_goal(self.env_rng)
        s = env.reset(self.env_rng)
        states, actions = [s], []
        for _ in range(env.spec.horizon):
            a = exploration_action(self.ac, s, goal, self.learner_rng)
            s = env.step(s, a)
            states.append(s)
            actions.append(a)
            if env.success(s, goal):
                break
        traj = Trajectory(np.array(states), np.array(actions), goal)
        self.replay.insert(traj)
        self.rollouts += 1
        self.env_steps += traj.length
        return traj

    def run_iteration(self) -> dict:
        """One outer training iteration; returns the metrics record."""
        st = self.settings
        sch = self.schedules
        p = sch.hindsight_p
        metrics = {
            "rollout_len": np.nan, "critic_loss": np.nan, "actor_q": np.nan,
            "bc_loss": np.nan, "disc_loss": np.nan, "d_agent": np.nan,
            "d_expert": np.nan, "reward_mean": np.nan, "relabel_frac": np.nan,
        }
        if not st.bc_only:
            traj = self._collect_rollout()
            metrics["rollout_len"] = traj.length
        if self.disc is not None:
            expert_b = self.expert_buffer.sample(
                st.batch_size, self.learner_rng,
                require_actions=st.disc_mode == "sag",
                consumer="the (s, a, g) discriminator",
            )
            agent_b = self.replay.sample(st.batch_size, self.learner_rng, p)
            d_loss, d_ag, d_ex = discriminator_update(
                self.disc, expert_b, agent_b,
                agent_original_goals=not st.disc_on_relabeled,
            )
            metrics.update(disc_loss=d_loss, d_agent=d_ag, d_expert=d_ex)

        beta = sch.beta(self.rollouts) if self.uses_bc and not st.bc_only else 0.0
        critic_losses, actor_qs, bc_losses, reward_means, relabel_fracs = ([], [], [], [], [])
        for _ in range(st.n_updates):
            if st.bc_only:
                expert_b = self.expert_buffer.sample(
                    st.batch_size, self.learner_rng, require_actions=True,
                    consumer="behavioral cloning",
                )
                loss, grad = bc_loss(self.ac, expert_b)
                neg = self.ac.actor.zeros_like()
                neg.flat[...] = grad.flat
                nn.adam_step(self.ac.actor, neg, self.ac.actor_opt)
                bc_losses.append(loss)
                continue
            batch = self.replay.sample(st.batch_size, self.learner_rng, p)
            rewards = None
            if self.disc is not None:
                rewards = gail_reward(
                    self.disc, batch, self.current_delta,
                    original_goals=not st.disc_on_relabeled,
                )
            critic_losses.append(critic_update(self.ac, batch, self.env.spec.gamma, rewards))
            expert_b = None
            if beta > 0.0:
                expert_b = self.expert_buffer.sample(
                    st.batch_size, self.learner_rng, require_actions=True,
                    consumer="behavioral cloning",
                )
            q_mean, bc_value = actor_update(
                self.ac, batch, beta=beta, expert_batch=expert_b,
                q_filter=st.q_filter,
            )
            self.ac.update_targets()
            actor_qs.append(q_mean)
            if bc_value is not None:
                bc_losses.append(bc_value)
            reward_means.append(float(np.mean(rewards if rewards is not None else batch.r)))
            relabel_fracs.append(float(np.mean(batch.relabeled != 0)))

        self.iteration += 1
        self.current_delta *= sch.delta_anneal
        for key, values in (
            ("critic_loss", critic_losses), ("actor_q", actor_qs),
            ("bc_loss", bc_losses), ("reward_mean", reward_means),
            ("relabel_frac", relabel_fracs),
        ):
            if values:
                metrics[key] = float(np.mean(values))
        metrics["beta"] = beta if not st.bc_only else np.nan
        metrics["delta_gail"] = self.current_delta if self.disc is not None else np.nan
        metrics["buffer_size"] = self.replay.size if self.replay is not None else (
            self.expert_buffer.size if self.expert_buffer else 0
        )
        metrics["iteration"] = self.iteration
        metrics["env_steps"] = self.env_steps
        return metrics
