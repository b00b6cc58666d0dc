"""Asteroid proximity hovering testbed.

Synthesizes small-body shape and rotation models, simulates a 12-thruster
spacecraft in the asteroid body-fixed frame, renders flash-LIDAR range
images, and trains a recurrent on/off thruster policy with clipped
policy-gradient updates.
"""

__version__ = "0.1.0"
