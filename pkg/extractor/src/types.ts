/** One raw post as described by a line of the captions JSONL file. */
export interface RawPost {
  post_id: string;
  influencer_id: string;
  category: string;
  followers: number;
  likes: number;
  comments: number;
  /** RFC 3339 timestamp */
  posted_at: string;
  caption: string;
  /** image file name, relative to the --images directory */
  image: string;
  is_video?: boolean;
  is_sponsored?: boolean;
  has_location?: boolean;
}

/** Flat numeric feature record; every value lands in a posts.csv column. */
export type FeatureRecord = Record<string, number>;

export interface Diagnostic {
  post_id: string;
  stage: string;
  reason: string;
}
