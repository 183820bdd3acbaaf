"""Weld radiograph defect segmentation toolkit.

Subpackages and modules:

- :mod:`weldnde.imagecore` images, masks, affine warps, preprocessing, PGM I/O
- :mod:`weldnde.synthgen` synthetic weld radiographs with cracks and pores
- :mod:`weldnde.augment` patch sampling, standard and virtual-flaw augmentation
- :mod:`weldnde.nnet` numpy U-Net, loss, Adam, training loop, checkpoints
- :mod:`weldnde.infer` tiled whole-image inference
- :mod:`weldnde.postproc` indications, shape fitting, acceptance rules
- :mod:`weldnde.evalnde` hit/miss POD, sizing error, false-call rates, experiments
- :mod:`weldnde.cli` command-line orchestrator
"""
__version__ = "0.1.0"
