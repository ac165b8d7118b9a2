"""
Goal-reaching reinforcement learning for a unicycle mobile robot.

Tabular benchmark policy, Lyapunov-like stabilizer layer and the matched-goal
evaluation harness.
"""
