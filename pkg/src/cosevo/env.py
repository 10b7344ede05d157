"""Deterministic built-in fixed-shooter game plus frame-skip and sticky wrappers.

The game runs on an integer-rasterized grayscale canvas: a 6 x 8 grid of
enemies marches horizontally and descends at the screen edges, the player
moves along the bottom and fires one bullet at a time, and enemies return
fire on a seeded random schedule. Higher enemy rows are worth more points,
and the march accelerates as enemies are destroyed. Geometry scales with
the configured canvas size; every rule constant below is overridable via
GameRules. All state transitions are integer arithmetic, so trajectories
are bit-identical across platforms given (seed, action sequence).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidActionError, LifecycleError
from .transform import Frame

ACTIONS = ("NOOP", "FIRE", "LEFT", "RIGHT", "LEFTFIRE", "RIGHTFIRE")
NOOP, FIRE, LEFT, RIGHT, LEFTFIRE, RIGHTFIRE = range(6)

_MOVE = {LEFT: -1, LEFTFIRE: -1, RIGHT: 1, RIGHTFIRE: 1}
_FIRES = (FIRE, LEFTFIRE, RIGHTFIRE)


@dataclass(frozen=True)
class GameRules:
    """Rule constants of the built-in game (pixel units scale with the canvas)."""

    enemy_rows: int = 6
    enemy_cols: int = 8
    # points per enemy row, top to bottom
    row_points: tuple[int, ...] = (30, 25, 20, 15, 10, 10)
    # march: horizontal step size and the tick interval between steps at full
    # strength; the interval shrinks toward 1 as enemies die
    march_dx: int = 2
    march_interval: int = 6
    player_speed: int = 2
    player_bullet_speed: int = 4
    enemy_bullet_speed: int = 3
    # enemies target the player's column with probability enemy_aim_prob,
    # otherwise a uniformly random survivor fires; aimed fire punishes
    # stationary players, so scoring well requires movement
    enemy_fire_prob: float = 0.06
    enemy_aim_prob: float = 0.7
    max_enemy_bullets: int = 3
    lives: int = 3
    # grayscale intensities (8-bit)
    enemy_intensity: int = 255
    player_intensity: int = 180
    player_bullet_intensity: int = 120
    enemy_bullet_intensity: int = 80


@dataclass(frozen=True)
class EnvConfig:
    """Environment setup: canvas size, wrappers' parameters, episode cap, seed."""

    frame_skip: int = 4
    sticky_prob: float = 0.0
    max_steps: int = 10_000
    seed: int = 0
    height: int = 210
    width: int = 160
    rules: GameRules = field(default_factory=GameRules)

    def __post_init__(self) -> None:
        if not 0.0 <= self.sticky_prob <= 1.0:
            raise ConfigError(f"sticky_prob must be in [0, 1], got {self.sticky_prob}")
        if self.frame_skip < 1:
            raise ConfigError(f"frame_skip must be >= 1, got {self.frame_skip}")
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.height < 60 or self.width < 48:
            raise ConfigError(
                f"canvas must be at least 60x48, got {self.height}x{self.width}"
            )


@dataclass(frozen=True)
class StepResult:
    frame: Frame
    reward: float
    terminated: bool


@dataclass(frozen=True)
class _Geometry:
    """Pixel layout derived from the canvas size."""

    enemy_h: int
    enemy_w: int
    grid_dx: int
    grid_dy: int
    top_margin: int
    descend_dy: int
    player_h: int
    player_w: int
    player_y: int
    pbullet_w: int
    pbullet_h: int
    ebullet_w: int
    ebullet_h: int


def _make_geometry(h: int, w: int, rules: GameRules) -> _Geometry:
    enemy_h = max(3, h // 30)
    enemy_w = max(3, w // 20)
    grid_dx = max(enemy_w + 2, w // 12)
    grid_dy = max(enemy_h + 2, h // 18)
    player_h = max(3, h // 30)
    player_w = max(4, w // 16)
    geom = _Geometry(
        enemy_h=enemy_h,
        enemy_w=enemy_w,
        grid_dx=grid_dx,
        grid_dy=grid_dy,
        top_margin=h // 8,
        descend_dy=max(2, h // 35),
        player_h=player_h,
        player_w=player_w,
        player_y=h - player_h - 2,
        # bullet height must exceed (speed - height) sampling gaps so fast
        # bullets cannot tunnel through thin sprites
        pbullet_w=max(1, w // 80),
        pbullet_h=max(3, h // 52),
        ebullet_w=max(1, w // 80),
        ebullet_h=max(2, h // 70),
    )
    span = (rules.enemy_cols - 1) * grid_dx + enemy_w
    if span >= w:
        raise ConfigError(f"canvas width {w} too small for the enemy formation")
    return geom


class ShooterEnv:
    """The built-in game. One instance per evaluator; reset() before stepping."""

    def __init__(self, config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        self.rules = self.config.rules
        self.geom = _make_geometry(self.config.height, self.config.width, self.rules)
        if len(self.rules.row_points) != self.rules.enemy_rows:
            raise ConfigError("row_points must list one value per enemy row")
        g = self.geom
        r = self.rules
        self._span = (r.enemy_cols - 1) * g.grid_dx + g.enemy_w
        self._formation_h = (r.enemy_rows - 1) * g.grid_dy + g.enemy_h
        self._canvas = np.zeros((self.config.height, self.config.width), dtype=np.uint8)
        self._template = np.zeros((self._formation_h, self._span), dtype=np.uint8)
        self._started = False
        self._terminated = True

    @property
    def height(self) -> int:
        return self.config.height

    @property
    def width(self) -> int:
        return self.config.width

    @property
    def action_count(self) -> int:
        return len(ACTIONS)

    def reset(self, seed: int | None = None) -> Frame:
        g = self.geom
        r = self.rules
        self._rng = np.random.Generator(np.random.PCG64(
            self.config.seed if seed is None else seed))
        self._tick = 0
        self._terminated = False
        self._started = True
        self._lives = r.lives
        self._alive = np.ones((r.enemy_rows, r.enemy_cols), dtype=bool)
        self._march_range = self.width - self._span
        # seeded initial formation placement; the only reset-time randomness
        self._offset_x = int(self._rng.integers(0, self._march_range + 1))
        self._offset_y = 0
        self._march_dir = 1
        self._refresh_alive_caches()
        self._march_cooldown = self._current_interval()
        self._player_x = (self.width - g.player_w) // 2
        self._player_bullet: tuple[int, int] | None = None  # (y, x) top-left
        self._enemy_bullets: list[tuple[int, int]] = []
        return self._render()

    def step(self, action: int) -> StepResult:
        reward, terminated = self._advance(action)
        return StepResult(frame=self._render(), reward=float(reward), terminated=terminated)

    def step_repeat(self, action: int, repeat: int) -> StepResult:
        """Advance up to `repeat` ticks of the same action, rendering once at
        the end: the frame-skip fast path."""
        total = 0
        for _ in range(repeat):
            reward, terminated = self._advance(action)
            total += reward
            if terminated:
                break
        return StepResult(frame=self._render(), reward=float(total), terminated=terminated)

    # -- game logic ---------------------------------------------------------

    def _advance(self, action: int) -> tuple[int, bool]:
        """One emulation tick without rendering; returns (points, terminated)."""
        if not self._started or self._terminated:
            raise LifecycleError("environment must be reset before stepping")
        if not 0 <= action < len(ACTIONS):
            raise InvalidActionError(f"action {action} outside 0..{len(ACTIONS) - 1}")
        g = self.geom
        r = self.rules
        self._tick += 1
        reward = 0

        move = _MOVE.get(action, 0)
        if move:
            self._player_x = min(
                max(self._player_x + move * r.player_speed, 0),
                self.width - g.player_w,
            )
        if action in _FIRES and self._player_bullet is None:
            self._player_bullet = (
                g.player_y - g.pbullet_h,
                self._player_x + g.player_w // 2 - g.pbullet_w // 2,
            )

        reward += self._advance_player_bullet()
        self._advance_enemy_bullets()
        self._march()
        self._enemy_fire()

        if self._alive_count == 0:
            self._terminated = True
        elif self._formation_bottom() >= g.player_y:
            self._terminated = True
        elif self._lives <= 0:
            self._terminated = True
        elif self._tick >= self.config.max_steps:
            self._terminated = True

        return reward, self._terminated

    def _current_interval(self) -> int:
        r = self.rules
        total = r.enemy_rows * r.enemy_cols
        return 1 + (r.march_interval - 1) * self._alive_count // total

    def _refresh_alive_caches(self) -> None:
        """Recompute alive count, formation bounds, and the render template.

        Called at reset and after each kill, never in the per-tick path.
        """
        g = self.geom
        self._alive_count = int(self._alive.sum())
        rows = np.flatnonzero(self._alive.any(axis=1))
        cols = np.flatnonzero(self._alive.any(axis=0))
        self._bottom_alive_row = int(rows[-1]) if rows.size else -1
        self._col_lo = int(cols[0]) if cols.size else 0
        self._col_hi = int(cols[-1]) if cols.size else 0
        self._template[:] = 0
        intensity = self.rules.enemy_intensity
        for row in range(self.rules.enemy_rows):
            y = row * g.grid_dy
            for col in range(self.rules.enemy_cols):
                if self._alive[row, col]:
                    x = col * g.grid_dx
                    self._template[y : y + g.enemy_h, x : x + g.enemy_w] = intensity

    def _formation_bottom(self) -> int:
        if self._bottom_alive_row < 0:
            return 0
        g = self.geom
        return (
            g.top_margin + self._offset_y + self._bottom_alive_row * g.grid_dy + g.enemy_h
        )

    def _advance_player_bullet(self) -> int:
        if self._player_bullet is None:
            return 0
        g = self.geom
        r = self.rules
        y, x = self._player_bullet
        y -= r.player_bullet_speed
        if y + g.pbullet_h <= 0:
            self._player_bullet = None
            return 0
        # arithmetic lookup of the grid cells the bullet rectangle overlaps
        oy = g.top_margin + self._offset_y
        ox = self._offset_x
        r_lo = max(0, (y - oy - g.enemy_h) // g.grid_dy + 1)
        r_hi = min(r.enemy_rows - 1, (y + g.pbullet_h - 1 - oy) // g.grid_dy)
        c_lo = max(0, (x - ox - g.enemy_w) // g.grid_dx + 1)
        c_hi = min(r.enemy_cols - 1, (x + g.pbullet_w - 1 - ox) // g.grid_dx)
        # bottom row first: the nearest enemy in the bullet's path absorbs it
        for row in range(r_hi, r_lo - 1, -1):
            for col in range(c_lo, c_hi + 1):
                if self._alive[row, col]:
                    self._alive[row, col] = False
                    self._player_bullet = None
                    self._refresh_alive_caches()
                    return r.row_points[row]
        self._player_bullet = (y, x)
        return 0

    def _advance_enemy_bullets(self) -> None:
        if not self._enemy_bullets:
            return
        g = self.geom
        px0, px1 = self._player_x, self._player_x + g.player_w
        survivors: list[tuple[int, int]] = []
        hit = False
        for y, x in self._enemy_bullets:
            y += self.rules.enemy_bullet_speed
            if y >= self.height:
                continue
            if (
                not hit
                and y < g.player_y + g.player_h
                and y + g.ebullet_h > g.player_y
                and x < px1
                and x + g.ebullet_w > px0
            ):
                hit = True
                continue
            survivors.append((y, x))
        if hit:
            self._lives -= 1
            self._player_x = (self.width - g.player_w) // 2
            self._player_bullet = None
            survivors = []
        self._enemy_bullets = survivors

    def _march(self) -> None:
        if self._alive_count == 0:
            return
        self._march_cooldown -= 1
        if self._march_cooldown > 0:
            return
        g = self.geom
        left_edge = self._offset_x + self._col_lo * g.grid_dx
        right_edge = self._offset_x + self._col_hi * g.grid_dx + g.enemy_w
        dx = self._march_dir * self.rules.march_dx
        if right_edge + dx > self.width or left_edge + dx < 0:
            self._offset_y += g.descend_dy
            self._march_dir = -self._march_dir
        else:
            self._offset_x += dx
        self._march_cooldown = self._current_interval()

    def _enemy_fire(self) -> None:
        if len(self._enemy_bullets) >= self.rules.max_enemy_bullets:
            return
        if self._rng.random() >= self.rules.enemy_fire_prob:
            return
        if self._alive_count == 0:
            return
        g = self.geom
        if self._rng.random() < self.rules.enemy_aim_prob:
            # bottom survivor of the alive column nearest the player's center
            target = self._player_x + g.player_w // 2
            best_col, best_dist = -1, None
            for col in range(self.rules.enemy_cols):
                rows = np.flatnonzero(self._alive[:, col])
                if rows.size == 0:
                    continue
                center = self._offset_x + col * g.grid_dx + g.enemy_w // 2
                dist = abs(center - target)
                if best_dist is None or dist < best_dist:
                    best_col, best_dist = col, dist
            col = best_col
            row = int(np.flatnonzero(self._alive[:, col])[-1])
        else:
            flat = np.flatnonzero(self._alive.ravel())
            pick = int(flat[self._rng.integers(0, flat.size)])
            row, col = divmod(pick, self.rules.enemy_cols)
        y = g.top_margin + self._offset_y + row * g.grid_dy + g.enemy_h
        x = self._offset_x + col * g.grid_dx + g.enemy_w // 2 - g.ebullet_w // 2
        self._enemy_bullets.append((y, x))

    def _render(self) -> Frame:
        g = self.geom
        r = self.rules
        canvas = self._canvas
        canvas[:] = 0
        if self._alive_count:
            # dead edge columns let the formation slide past the canvas, so
            # clip the template blit; clipped regions hold only dead cells
            y0 = g.top_margin + self._offset_y
            y1 = min(y0 + self._formation_h, self.height)
            x0 = max(self._offset_x, 0)
            x1 = min(self._offset_x + self._span, self.width)
            tx0 = x0 - self._offset_x
            canvas[y0:y1, x0:x1] = self._template[: y1 - y0, tx0 : tx0 + (x1 - x0)]
        canvas[
            g.player_y : g.player_y + g.player_h,
            self._player_x : self._player_x + g.player_w,
        ] = r.player_intensity
        if self._player_bullet is not None:
            y, x = self._player_bullet
            canvas[max(y, 0) : max(y + g.pbullet_h, 0), x : x + g.pbullet_w] = (
                r.player_bullet_intensity
            )
        for y, x in self._enemy_bullets:
            canvas[y : y + g.ebullet_h, x : x + g.ebullet_w] = r.enemy_bullet_intensity
        return Frame(canvas.astype(np.float64) / 255.0)


class FrameSkipEnv:
    """Repeat each action `skip` ticks, summing rewards and keeping the last frame."""

    def __init__(self, env, skip: int):
        if skip < 1:
            raise ConfigError(f"frame skip must be >= 1, got {skip}")
        self.env = env
        self.skip = skip
        self._fast_path = getattr(env, "step_repeat", None)

    @property
    def height(self) -> int:
        return self.env.height

    @property
    def width(self) -> int:
        return self.env.width

    @property
    def action_count(self) -> int:
        return self.env.action_count

    def reset(self, seed: int | None = None) -> Frame:
        return self.env.reset(seed)

    def step(self, action: int) -> StepResult:
        if self._fast_path is not None:
            return self._fast_path(action, self.skip)
        total = 0.0
        result = None
        for _ in range(self.skip):
            result = self.env.step(action)
            total += result.reward
            if result.terminated:
                break
        return StepResult(frame=result.frame, reward=total, terminated=result.terminated)

    def close(self) -> None:
        close = getattr(self.env, "close", None)
        if close:
            close()


class StickyEnv:
    """With probability `prob`, execute the previous action instead of the
    requested one. Uses a generator seeded independently of the game, so
    robustness evaluation perturbs actions without re-seeding the world."""

    def __init__(self, env, prob: float, seed: int = 0):
        if not 0.0 <= prob <= 1.0:
            raise ConfigError(f"sticky prob must be in [0, 1], got {prob}")
        self.env = env
        self.prob = prob
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._prev: int | None = None
        self.repeat_count = 0
        self.decision_count = 0

    @property
    def height(self) -> int:
        return self.env.height

    @property
    def width(self) -> int:
        return self.env.width

    @property
    def action_count(self) -> int:
        return self.env.action_count

    def reset(self, seed: int | None = None) -> Frame:
        self._prev = None
        return self.env.reset(seed)

    def step(self, action: int) -> StepResult:
        executed = action
        if self._prev is not None:
            self.decision_count += 1
            if self._rng.random() < self.prob:
                executed = self._prev
                self.repeat_count += 1
        self._prev = executed
        return self.env.step(executed)

    def close(self) -> None:
        close = getattr(self.env, "close", None)
        if close:
            close()


def wrap_frame_skip(env, skip: int) -> FrameSkipEnv:
    return FrameSkipEnv(env, skip)


def wrap_sticky(env, prob: float, seed: int = 0) -> StickyEnv:
    return StickyEnv(env, prob, seed)
