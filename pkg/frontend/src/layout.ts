// Deterministic canvas placement: the first seed sits at the center and
// each expansion fans its new neighbors on a ring around the node they
// came from. No physics, so replaying a trail redraws the same picture.

export interface Point {
  x: number;
  y: number;
}

const RING_RADIUS = 150;
const JITTER_RADIUS = 28;

export class RadialLayout {
  private readonly positions = new Map<string, Point>();
  private seeds = 0;

  constructor(private readonly width: number, private readonly height: number) {}

  get(id: string): Point | undefined {
    return this.positions.get(id);
  }

  placeSeed(id: string): Point {
    if (this.positions.has(id)) {
      return this.positions.get(id)!;
    }
    // successive seeds go on a wide ring around the canvas center
    const angle = this.seeds * (Math.PI * 2 / 5);
    const radius = this.seeds === 0 ? 0 : RING_RADIUS * 1.8;
    this.seeds += 1;
    return this.put(id, {
      x: this.width / 2 + radius * Math.cos(angle),
      y: this.height / 2 + radius * Math.sin(angle),
    });
  }

  placeAround(originId: string, ids: string[]): void {
    const origin = this.positions.get(originId) ?? this.placeSeed(originId);
    const fresh = ids.filter((id) => !this.positions.has(id));
    fresh.forEach((id, index) => {
      const angle = (index / Math.max(fresh.length, 1)) * Math.PI * 2
        + hashAngle(originId);
      this.put(id, {
        x: origin.x + RING_RADIUS * Math.cos(angle),
        y: origin.y + RING_RADIUS * Math.sin(angle),
      });
    });
  }

  private put(id: string, point: Point): Point {
    // nudge exact overlaps apart so labels stay readable
    let candidate = point;
    let attempt = 0;
    while (this.tooClose(candidate) && attempt < 12) {
      attempt += 1;
      const angle = hashAngle(id) + attempt;
      candidate = {
        x: point.x + JITTER_RADIUS * attempt * Math.cos(angle),
        y: point.y + JITTER_RADIUS * attempt * Math.sin(angle),
      };
    }
    this.positions.set(id, candidate);
    return candidate;
  }

  private tooClose(point: Point): boolean {
    for (const other of this.positions.values()) {
      const dx = other.x - point.x;
      const dy = other.y - point.y;
      if (dx * dx + dy * dy < JITTER_RADIUS * JITTER_RADIUS) {
        return true;
      }
    }
    return false;
  }
}

function hashAngle(id: string): number {
  let h = 2166136261;
  for (let i = 0; i < id.length; i += 1) {
    h = (h ^ id.charCodeAt(i)) * 16777619;
    h >>>= 0;
  }
  return (h % 6283) / 1000;
}
