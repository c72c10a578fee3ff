"""tweenkit: kinematic motion in-betweening toolkit.

Library layout:

* ``rotmath``    rotation / planar geometry primitives
* ``arrayfile``  versioned binary array container used by all file formats
* ``skeleton``   joint hierarchy and mirror pairing
* ``bvh``        BVH text format read/write
* ``clip``       motion clips, forward kinematics, derived quantities
* ``synth``      procedural synthetic motion generator
* ``features``   network input assembly (pose state, conditions, phases)
* ``network``    mixture-of-experts pose predictor (forward + backward)
* ``losses``     training losses and their gradients
* ``training``   AdamW loop, dataset sampling
* ``rollout``    autoregressive generation under trajectory guidance
* ``gallery``    atomic trajectory gallery and candidate search
* ``metrics``    evaluation metrics and interpolation baseline
* ``report``     delimited reports + matplotlib figures
* ``cli``        command line entry points
* ``service``    HTTP authoring facade
"""

__version__ = "0.1.0"
