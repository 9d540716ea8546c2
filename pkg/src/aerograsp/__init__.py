"""Decentralized passive impedance control for aerial manipulators grasping together."""
