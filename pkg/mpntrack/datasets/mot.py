#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' MOTChallenge text files and sequence directories.

    A record is ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z``.
    Frames are 1-based on disk and 0-based everywhere else.  Raw detection
    files carry id -1; a detection's id is its record position in the file,
    which is also the key of its row in appearance.csv.

    Sequence directory layout::

        <root>/<name>/det.txt         raw detections
        <root>/<name>/gt.txt          ground truth (optional)
        <root>/<name>/appearance.csv  one vector per detection id (optional)
        <root>/<name>/seqinfo.ini     frameRate, seqLength, image size, static flag
'''

import configparser
import logging
import os

import numpy as np

from mpntrack.graph    import Detection
from mpntrack.utils    import iou_assignment
from mpntrack.encoders.features import FileAppearance, write_appearance
from mpntrack.datasets.synthetic import Sequence, group_tracks

logger = logging.getLogger(__name__)


class MotFormatError(ValueError):
    def __init__(self, path, line_id, msg):
        self.path    = path
        self.line_id = line_id
        super().__init__(f"{path}:{line_id}: {msg}")




def _fmt(v):
    return np.format_float_positional(float(v), trim = '-')


def _read_records(path):
    ''' Yield (line_id, fields) for every non-empty, non-comment line.  '''
    if not os.path.exists(path):
        raise FileNotFoundError(path)

    with open(path, 'r') as fh:
        for line_id, line in enumerate(fh, start = 1):
            line = line.strip()
            if not line or line.startswith('#'): continue

            fields = [ v.strip() for v in line.split(',') ]
            if len(fields) < 6:
                raise MotFormatError(path, line_id, f"expected at least 6 fields, got {len(fields)}")
            try:
                frame  = int(float(fields[0]))
                obj_id = int(float(fields[1]))
                box    = tuple(float(v) for v in fields[2:6])
                conf   = float(fields[6]) if len(fields) > 6 else 1.0
            except ValueError as err:
                raise MotFormatError(path, line_id, f"non-numeric field ({err})") from err
            if frame < 1:
                raise MotFormatError(path, line_id, f"frame must be >= 1, got {frame}")
            if box[2] <= 0 or box[3] <= 0:
                raise MotFormatError(path, line_id, f"box width and height must be positive, got {box}")

            yield line_id, (frame - 1, obj_id, box, conf)




def read_detections(path):
    ''' Raw detections in file order; ids are record positions.  '''
    return [ Detection(id = idx, frame = frame, box = box, confidence = conf)
             for idx, (_, (frame, _, box, conf)) in enumerate(_read_records(path)) ]


def read_tracks(path, drop_ignored = False):
    ''' Boxes grouped by id into trajectories, ordered by id.

        With drop_ignored, records whose conf field is 0 (the ground truth
        "do not consider" flag) are skipped.
    '''
    dets = []
    for idx, (_, (frame, obj_id, box, conf)) in enumerate(_read_records(path)):
        if drop_ignored and conf == 0: continue
        dets.append(Detection(id = idx, frame = frame, box = box, confidence = conf, gt_track = obj_id))

    return group_tracks(dets)


def read_ground_truth(path):
    return read_tracks(path, drop_ignored = True)




def write_results(path, trajectories):
    ''' One line per (frame, id) box, sorted by frame then id.  '''
    rows = []
    for traj in trajectories:
        if traj.track_id is None:
            raise ValueError("Trajectories need a track_id before they are written.")
        for det in traj.detections:
            rows.append((det.frame, traj.track_id, det.box))
    rows.sort(key = lambda r: (r[0], r[1]))

    with open(path, 'w') as fh:
        for frame, track_id, box in rows:
            fh.write(",".join([ str(frame + 1), str(track_id), *[ _fmt(v) for v in box ], "1", "-1", "-1", "-1" ]) + "\n")

    logger.info(f"SAVE - {path}")


def write_detections(path, detections):
    with open(path, 'w') as fh:
        for det in sorted(detections, key = lambda d: d.id):
            fh.write(",".join([ str(det.frame + 1), "-1", *[ _fmt(v) for v in det.box ], _fmt(det.confidence), "-1", "-1", "-1" ]) + "\n")

    logger.info(f"SAVE - {path}")




def assign_ground_truth(detections, ground_truth, iou_min = 0.5):
    ''' Give each detection the identity of the ground truth box it matches
        best in its frame (optimal one-to-one IoU matching), None otherwise.
    '''
    gt_by_frame = {}
    for gt in ground_truth: gt_by_frame.setdefault(gt.frame, []).append(gt)

    det_by_frame = {}
    for idx, det in enumerate(detections): det_by_frame.setdefault(det.frame, []).append(idx)

    assigned = [ det.replace(gt_track = None) for det in detections ]
    for frame, idxs in det_by_frame.items():
        gts = gt_by_frame.get(frame, [])
        if not gts: continue
        pairs = iou_assignment([ detections[i].box for i in idxs ], [ gt.box for gt in gts ], iou_min = iou_min)
        for r, c in pairs:
            assigned[idxs[r]] = detections[idxs[r]].replace(gt_track = gts[c].gt_track)

    num_hit = sum(det.gt_track is not None for det in assigned)
    logger.info(f"MSG - assigned ground truth to {num_hit} of {len(assigned)} detections")

    return assigned




def read_seqinfo(path):
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read(path)
    if 'Sequence' not in parser:
        raise MotFormatError(path, 1, "missing [Sequence] section")
    sec = parser['Sequence']

    return dict( name       = sec.get('name'),
                 native_fps = sec.getfloat('frameRate', 30.0),
                 num_frames = sec.getint('seqLength', None),
                 image_size = (sec.getfloat('imWidth', 1920.0), sec.getfloat('imHeight', 1080.0)),
                 static     = sec.getboolean('static', True), )


def write_seqinfo(path, sequence):
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser['Sequence'] = { 'name'      : sequence.name,
                           'frameRate' : _fmt(sequence.native_fps),
                           'seqLength' : str(max(sequence.frames) + 1 if sequence.frames else 0),
                           'imWidth'   : _fmt(sequence.image_size[0]),
                           'imHeight'  : _fmt(sequence.image_size[1]),
                           'static'    : '1' if sequence.static else '0', }
    with open(path, 'w') as fh:
        parser.write(fh)




def read_sequence_dir(drc, static = None, native_fps = None):
    ''' Load a sequence directory into a Sequence.

        Ground truth, when present, is matched onto the detections so the
        sequence can be used for training.
    '''
    path_det  = os.path.join(drc, 'det.txt')
    path_gt   = os.path.join(drc, 'gt.txt')
    path_app  = os.path.join(drc, 'appearance.csv')
    path_info = os.path.join(drc, 'seqinfo.ini')

    info = read_seqinfo(path_info) if os.path.exists(path_info) else {}
    detections = read_detections(path_det)

    ground_truth = []
    if os.path.exists(path_gt):
        ground_truth = [ det for traj in read_ground_truth(path_gt) for det in traj.detections ]
        detections   = assign_ground_truth(detections, ground_truth)

    if os.path.exists(path_app) and detections:
        detections = FileAppearance(path_app).attach(detections)

    num_frames = info.get('num_frames')
    if num_frames is None:
        num_frames = 1 + max([ det.frame for det in detections + ground_truth ], default = -1)

    return Sequence( name         = info.get('name') or os.path.basename(os.path.normpath(drc)),
                     detections   = detections,
                     ground_truth = ground_truth,
                     native_fps   = native_fps or info.get('native_fps', 30.0),
                     frames       = range(num_frames),
                     static       = info.get('static', True) if static is None else static,
                     image_size   = info.get('image_size', (1920.0, 1080.0)), )


def write_sequence_dir(root, sequence):
    drc = os.path.join(root, sequence.name)
    os.makedirs(drc, exist_ok = True)

    # Detections are renumbered by file position...
    detections = sorted(sequence.detections, key = lambda d: d.id)
    write_detections(os.path.join(drc, 'det.txt'), detections)
    if sequence.ground_truth:
        write_results(os.path.join(drc, 'gt.txt'), group_tracks(sequence.ground_truth))
    if detections and detections[0].appearance is not None:
        renumbered = [ det.replace(id = idx) for idx, det in enumerate(detections) ]
        write_appearance(os.path.join(drc, 'appearance.csv'), renumbered)
    write_seqinfo(os.path.join(drc, 'seqinfo.ini'), sequence)

    logger.info(f"SAVE - {drc}")

    return drc
